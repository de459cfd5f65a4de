use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use crate::data::{Dataset, DomainSplits};
use crate::distill::{cross_entropy_loss_and_grad, instance_loss_and_grad, static_kd_loss_and_grad};
use crate::error::{Error, Result};
use crate::hypothesis::SourceHypothesis;
use crate::metrics::{evaluate, EvalResult};
use crate::model::{adam_step, AdamState, Gradients, TargetNetwork};
use crate::prob::ProbVector;

/// Means over the instances seen in one epoch. Distillation fields are
/// absent for target-only training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_standard: f64,
    pub mean_distill: Option<f64>,
    pub mean_alpha: Option<f64>,
    pub min_alpha: Option<f64>,
    pub max_alpha: Option<f64>,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: EvalResult,
    pub val: EvalResult,
    pub test: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub metrics: SplitMetrics,
    /// Not serialized, so reports of identical runs compare byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

pub fn evaluate_network(net: &TargetNetwork, ds: &Dataset) -> Result<EvalResult> {
    let preds = ds
        .features()
        .iter()
        .map(|x| net.predict_proba(x))
        .collect::<Result<Vec<_>>>()?;
    evaluate(&preds, ds.labels())
}

pub fn evaluate_source(source: &SourceHypothesis, ds: &Dataset) -> Result<EvalResult> {
    let preds = source.predict_batch(ds.features())?;
    evaluate(&preds, ds.labels())
}

fn evaluate_splits(net: &TargetNetwork, data: &DomainSplits) -> Result<SplitMetrics> {
    Ok(SplitMetrics {
        train: evaluate_network(net, &data.train)?,
        val: evaluate_network(net, &data.val)?,
        test: evaluate_network(net, &data.test)?,
    })
}

fn check_inputs(
    net: &TargetNetwork,
    source: Option<&SourceHypothesis>,
    data: &DomainSplits,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if !cfg.method.trains() {
        return Err(Error::invalid("SH evaluates the source and trains nothing"));
    }
    let classes = data.train.num_classes();
    if net.num_classes() != classes {
        return Err(Error::invalid(format!(
            "network emits {} classes, data has {classes}",
            net.num_classes()
        )));
    }
    if net.input_dim() != data.train.dim() {
        return Err(Error::invalid(format!(
            "network expects {} features, data has {}",
            net.input_dim(),
            data.train.dim()
        )));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::invalid("training needs nonempty train and val splits"));
    }
    if cfg.method.uses_source() {
        let source = source.ok_or_else(|| Error::invalid(format!("{} needs a source hypothesis", cfg.method)))?;
        if source.num_classes() != classes {
            return Err(Error::invalid(format!(
                "source predicts {} classes, data has {classes}",
                source.num_classes()
            )));
        }
    }
    Ok(())
}

#[derive(Default)]
struct EpochSums {
    loss: f64,
    standard: f64,
    distill: f64,
    alpha: f64,
    min_alpha: f64,
    max_alpha: f64,
    count: usize,
}

/// Trains `net` on the target splits.
///
/// Each epoch reshuffles the training set, and every batch takes one Adam
/// step on the batch-mean gradient. After each epoch the validation accuracy
/// is measured; training stops once `patience` epochs pass without a new
/// best, and the best epoch's parameters are returned (ties keep the earlier
/// epoch).
pub fn train(
    mut net: TargetNetwork,
    source: Option<&SourceHypothesis>,
    data: &DomainSplits,
    cfg: &TrainConfig,
) -> Result<(TargetNetwork, TrainReport)> {
    check_inputs(&net, source, data, cfg)?;
    let start = Instant::now();
    let classes = data.train.num_classes();
    let method = cfg.method;
    let floor = cfg.distill.prob_floor;

    // the source is fixed, so its answers are fetched once
    let source_probs: Vec<ProbVector> = match (method.uses_source(), source) {
        (true, Some(s)) => s.predict_batch(data.train.features())?,
        _ => Vec::new(),
    };
    let labels: Vec<ProbVector> = data
        .train
        .labels()
        .iter()
        .map(|&c| ProbVector::one_hot(c, classes))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // stream 0 of the same seed initializes the network
    rng.set_stream(1);
    let mut adam = AdamState::new(&net, cfg.adam)?;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, TargetNetwork)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sums = EpochSums {
            min_alpha: f64::INFINITY,
            max_alpha: f64::NEG_INFINITY,
            ..EpochSums::default()
        };
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(&net);
            for &i in batch {
                let numerical = |detail: String| Error::Numerical {
                    epoch,
                    batch: batch_idx,
                    instance: i,
                    detail,
                };
                let (z, cache) = net.forward(&data.train.features()[i])?;
                let (loss, standard, distill, alpha, dz) = match method {
                    Method::TargetOnly => {
                        let (l, g) = cross_entropy_loss_and_grad(&z, &labels[i], floor)?;
                        (l, l, None, None, g)
                    }
                    Method::StaticKd => {
                        let d = &cfg.distill;
                        let (l, g) = static_kd_loss_and_grad(
                            &z,
                            &labels[i],
                            &source_probs[i],
                            d.lambda,
                            d.temperature,
                            floor,
                        )?;
                        (l.total, l.standard, Some(l.distill), Some(l.weights.alpha), g)
                    }
                    Method::DynamicKd => {
                        let (l, g) = instance_loss_and_grad(&z, &labels[i], &source_probs[i], &cfg.distill)?;
                        (l.total, l.standard, Some(l.distill), Some(l.weights.alpha), g)
                    }
                    Method::SourceOnly => unreachable!("rejected in check_inputs"),
                };
                if !loss.is_finite() || dz.iter().any(|v| !v.is_finite()) {
                    return Err(numerical(format!("loss {loss}, logit gradient {dz:?}")));
                }
                net.backward_accumulate(&cache, &dz, &mut grads)?;
                sums.loss += loss;
                sums.standard += standard;
                sums.distill += distill.unwrap_or(0.0);
                if let Some(a) = alpha {
                    sums.alpha += a;
                    sums.min_alpha = sums.min_alpha.min(a);
                    sums.max_alpha = sums.max_alpha.max(a);
                }
                sums.count += 1;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut net, &grads, &mut adam).map_err(|e| match e {
                Error::Numerical { detail, .. } => Error::Numerical {
                    epoch,
                    batch: batch_idx,
                    instance: batch[0],
                    detail,
                },
                other => other,
            })?;
        }

        let val_accuracy = evaluate_network(&net, &data.val)?.accuracy;
        let n = sums.count as f64;
        let distills = method != Method::TargetOnly;
        epochs.push(EpochRecord {
            epoch,
            mean_loss: sums.loss / n,
            mean_standard: sums.standard / n,
            mean_distill: distills.then(|| sums.distill / n),
            mean_alpha: distills.then(|| sums.alpha / n),
            min_alpha: distills.then_some(sums.min_alpha),
            max_alpha: distills.then_some(sums.max_alpha),
            val_accuracy,
        });

        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, net.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }

    let (_, best_epoch, best_net) = best.expect("at least one epoch ran");
    let metrics = evaluate_splits(&best_net, data)?;
    Ok((
        best_net,
        TrainReport {
            config: *cfg,
            epochs,
            best_epoch,
            stopped_early,
            metrics,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    ))
}
