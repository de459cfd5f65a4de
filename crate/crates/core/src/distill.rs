//! Distillation math: temperature softening, the standard and distillation
//! losses, the consistency score, instance-wise dynamic weights, and the
//! analytic gradient of the combined loss with respect to target logits.
//!
//! The target model is white-box, so its softened distribution is computed
//! from its own logits. The source hypothesis is black-box: only its
//! probability vector is available, so it is softened by raising the
//! probabilities to `1/T` and renormalizing. Functions that touch the source
//! side accept a [`ProbVector`] only, never logits.
//!
//! The combined loss is used literally as `alpha * L1 + beta * L2`. There is
//! no `T^2` rescaling of the distillation term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{LogitVector, ProbVector};

/// Default clamp applied to probabilities before every logarithm.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

const MAX_PROB_FLOOR: f64 = 1e-3;
const WEIGHT_SUM_SLACK: f64 = 1e-9;

/// Hyperparameters of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub lambda: f64,
    pub delta: f64,
    pub temperature: f64,
    #[serde(default = "default_floor")]
    pub prob_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_PROB_FLOOR
}

impl DistillConfig {
    pub fn new(lambda: f64, delta: f64, temperature: f64) -> Result<Self> {
        let cfg = DistillConfig {
            lambda,
            delta,
            temperature,
            prob_floor: DEFAULT_PROB_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_floor(mut self, prob_floor: f64) -> Result<Self> {
        self.prob_floor = prob_floor;
        self.validate()?;
        Ok(self)
    }

    /// lambda = 0.1, delta = 0.9, T = 2.
    pub fn dynamic_default() -> Self {
        DistillConfig::new(0.1, 0.9, 2.0).expect("valid default")
    }

    /// lambda = 0.5, delta = 0, T = 2.
    pub fn static_default() -> Self {
        DistillConfig::new(0.5, 0.0, 2.0).expect("valid default")
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !unit(self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !unit(self.delta) {
            return Err(Error::invalid(format!("delta {} outside [0, 1]", self.delta)));
        }
        if self.lambda + self.delta > 1.0 + WEIGHT_SUM_SLACK {
            return Err(Error::invalid(format!(
                "lambda + delta = {} exceeds 1",
                self.lambda + self.delta
            )));
        }
        check_temperature(self.temperature)?;
        if !(self.prob_floor > 0.0 && self.prob_floor <= MAX_PROB_FLOOR) {
            return Err(Error::invalid(format!(
                "prob_floor {} outside (0, {MAX_PROB_FLOOR}]",
                self.prob_floor
            )));
        }
        Ok(())
    }
}

/// Mixing coefficients of the standard loss (`alpha`) and the distillation
/// loss (`beta`). `beta` is always computed as `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub alpha: f64,
    pub beta: f64,
}

/// Per-instance loss with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceLoss {
    pub total: f64,
    /// Cross-entropy against the hard label.
    pub standard: f64,
    /// Cross-entropy of the softened target against the softened source.
    pub distill: f64,
    pub consistency: f64,
    pub weights: WeightPair,
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive, got {t}")))
    }
}

fn check_same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what}: length {a} vs {b}")))
    }
}

/// Temperature softmax of logits, computed with max-subtraction.
pub fn soften_logits(z: &LogitVector, temperature: f64) -> Result<ProbVector> {
    check_temperature(temperature)?;
    let z = z.values();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbVector::from_normalized(
        exps.into_iter().map(|e| e / sum).collect(),
    ))
}

/// Softens a black-box probability vector: each entry is clamped to
/// `floor`, raised to `1/T`, and the result renormalized.
///
/// Entries are divided by the largest one before exponentiation so small
/// temperatures cannot underflow every entry to zero.
pub fn soften_probs(p: &ProbVector, temperature: f64, floor: f64) -> Result<ProbVector> {
    check_temperature(temperature)?;
    let clamped: Vec<f64> = p.values().iter().map(|&v| v.max(floor)).collect();
    let max = clamped.iter().copied().fold(0.0, f64::max);
    let inv_t = 1.0 / temperature;
    let powered: Vec<f64> = clamped.iter().map(|&v| (v / max).powf(inv_t)).collect();
    let sum: f64 = powered.iter().sum();
    Ok(ProbVector::from_normalized(
        powered.into_iter().map(|v| v / sum).collect(),
    ))
}

/// `-sum_j target_j * ln(max(pred_j, floor))`.
pub fn cross_entropy(target: &ProbVector, pred: &ProbVector, floor: f64) -> Result<f64> {
    check_same_len(target.len(), pred.len(), "cross_entropy")?;
    Ok(cross_entropy_raw(target.values(), pred.values(), floor))
}

fn cross_entropy_raw(target: &[f64], pred: &[f64], floor: f64) -> f64 {
    let sum: f64 = target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| t * p.max(floor).ln())
        .sum();
    -sum
}

/// Cross-entropy of the target's temperature-softened logits against the
/// source's softened probabilities.
pub fn distillation_loss(
    target_logits: &LogitVector,
    source_probs: &ProbVector,
    temperature: f64,
    floor: f64,
) -> Result<f64> {
    check_same_len(target_logits.len(), source_probs.len(), "distillation_loss")?;
    let soft_t = soften_logits(target_logits, temperature)?;
    let soft_s = soften_probs(source_probs, temperature, floor)?;
    cross_entropy(&soft_s, &soft_t, floor)
}

/// `exp(-H(y, p_s))`, in `(0, 1]`. For a one-hot label this is the clamped
/// source probability of the true class.
pub fn consistency_score(label: &ProbVector, source_probs: &ProbVector, floor: f64) -> Result<f64> {
    let h = cross_entropy(label, source_probs, floor)?;
    Ok((-h).exp().min(1.0))
}

/// `alpha = lambda + delta * (1 - S)`, `beta = 1 - alpha`.
pub fn dynamic_weights(score: f64, cfg: &DistillConfig) -> Result<WeightPair> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::invalid(format!("consistency score {score} outside [0, 1]")));
    }
    let alpha = cfg.lambda + cfg.delta * (1.0 - score);
    Ok(WeightPair {
        alpha,
        beta: 1.0 - alpha,
    })
}

/// Combined per-instance loss with dynamic weights.
pub fn instance_loss(
    z: &LogitVector,
    label: &ProbVector,
    source_probs: &ProbVector,
    cfg: &DistillConfig,
) -> Result<InstanceLoss> {
    instance_loss_and_grad(z, label, source_probs, cfg).map(|(loss, _)| loss)
}

/// Gradient of [`instance_loss`] with respect to the target logits:
/// `alpha * (p - y) + beta * (soft_t - soft_s) / T`.
///
/// `alpha`, `beta`, and the softened source distribution do not depend on the
/// logits. Clamping is ignored, so the gradient is exact only where no
/// target probability falls below the floor.
pub fn instance_loss_grad(
    z: &LogitVector,
    label: &ProbVector,
    source_probs: &ProbVector,
    cfg: &DistillConfig,
) -> Result<Vec<f64>> {
    instance_loss_and_grad(z, label, source_probs, cfg).map(|(_, grad)| grad)
}

pub fn instance_loss_and_grad(
    z: &LogitVector,
    label: &ProbVector,
    source_probs: &ProbVector,
    cfg: &DistillConfig,
) -> Result<(InstanceLoss, Vec<f64>)> {
    check_same_len(z.len(), label.len(), "instance_loss label")?;
    check_same_len(z.len(), source_probs.len(), "instance_loss source")?;
    let floor = cfg.prob_floor;
    let t = cfg.temperature;

    let score = consistency_score(label, source_probs, floor)?;
    let weights = dynamic_weights(score, cfg)?;
    let (loss, grad) = mixed_loss_and_grad(z, label, source_probs, weights, t, floor)?;
    Ok((
        InstanceLoss {
            consistency: score,
            ..loss
        },
        grad,
    ))
}

/// Static distillation with fixed coefficients `(lambda, 1 - lambda)`.
///
/// Skips the consistency score. With `delta = 0` the dynamic path must agree
/// with this one bit for bit.
pub fn static_kd_loss_and_grad(
    z: &LogitVector,
    label: &ProbVector,
    source_probs: &ProbVector,
    lambda: f64,
    temperature: f64,
    floor: f64,
) -> Result<(InstanceLoss, Vec<f64>)> {
    check_same_len(z.len(), label.len(), "static_kd label")?;
    check_same_len(z.len(), source_probs.len(), "static_kd source")?;
    let weights = WeightPair {
        alpha: lambda,
        beta: 1.0 - lambda,
    };
    mixed_loss_and_grad(z, label, source_probs, weights, temperature, floor)
}

fn mixed_loss_and_grad(
    z: &LogitVector,
    label: &ProbVector,
    source_probs: &ProbVector,
    weights: WeightPair,
    t: f64,
    floor: f64,
) -> Result<(InstanceLoss, Vec<f64>)> {
    let p = soften_logits(z, 1.0)?;
    let soft_t = soften_logits(z, t)?;
    let soft_s = soften_probs(source_probs, t, floor)?;

    let standard = cross_entropy_raw(label.values(), p.values(), floor);
    let distill = cross_entropy_raw(soft_s.values(), soft_t.values(), floor);
    let WeightPair { alpha, beta } = weights;
    let total = alpha * standard + beta * distill;

    let grad = (0..z.len())
        .map(|j| {
            alpha * (p.values()[j] - label.values()[j])
                + beta * ((soft_t.values()[j] - soft_s.values()[j]) / t)
        })
        .collect();
    Ok((
        InstanceLoss {
            total,
            standard,
            distill,
            consistency: f64::NAN,
            weights,
        },
        grad,
    ))
}

/// Plain softmax cross-entropy, the target-data-only objective. Returns the
/// loss and `p - y`.
pub fn cross_entropy_loss_and_grad(
    z: &LogitVector,
    label: &ProbVector,
    floor: f64,
) -> Result<(f64, Vec<f64>)> {
    check_same_len(z.len(), label.len(), "cross_entropy_loss label")?;
    let p = soften_logits(z, 1.0)?;
    let loss = cross_entropy_raw(label.values(), p.values(), floor);
    let grad = p
        .values()
        .iter()
        .zip(label.values())
        .map(|(&pj, &yj)| pj - yj)
        .collect();
    Ok((loss, grad))
}
