//! Accuracy, ROC AUC and average precision.
//!
//! ROC AUC uses the rank (Mann-Whitney) formulation with tied scores given
//! half credit. Average precision is the step-wise sum of precision at each
//! positive in score-descending order; ties keep their original order, so
//! results never depend on the platform's sort. A curve that cannot be
//! defined (no positives, or for ROC no negatives) yields `None`, never a
//! made-up 0 or 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ProbVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    /// Fraction of this class's instances predicted as this class.
    pub recall: Option<f64>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub accuracy: f64,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{a} predictions but {b} labels")));
    }
    if a == 0 {
        return Err(Error::invalid("metric over an empty set"));
    }
    Ok(())
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    Ok(())
}

/// Fraction of predictions whose argmax equals the label. Argmax ties go to
/// the lowest class index.
pub fn accuracy(preds: &[ProbVector], labels: &[usize]) -> Result<f64> {
    check_aligned(preds.len(), labels.len())?;
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(p, &y)| p.argmax() == y)
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Probability that a random positive outscores a random negative.
pub fn auroc_binary(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_aligned(scores.len(), labels.len())?;
    check_scores(scores)?;
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // midranks, 1-based; tied groups share the mean of their positions
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 2) as f64 / 2.0;
        let pos_in_group = order[start..=end].iter().filter(|&&i| labels[i]).count();
        rank_sum += midrank * pos_in_group as f64;
        start = end + 1;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * negatives as f64)))
}

/// Average precision over score-descending order, ties broken by original
/// index.
pub fn auprc_binary(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_aligned(scores.len(), labels.len())?;
    check_scores(scores)?;
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(Some(sum / positives as f64))
}

type BinaryMetric = fn(&[f64], &[bool]) -> Result<Option<f64>>;

fn one_vs_rest(preds: &[ProbVector], labels: &[usize], metric: BinaryMetric) -> Result<Vec<Option<f64>>> {
    check_aligned(preds.len(), labels.len())?;
    let classes = preds[0].len();
    if preds.iter().any(|p| p.len() != classes) {
        return Err(Error::invalid("prediction vectors differ in length"));
    }
    (0..classes)
        .map(|c| {
            let scores: Vec<f64> = preds.iter().map(|p| p.values()[c]).collect();
            let ys: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            metric(&scores, &ys)
        })
        .collect()
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Unweighted one-vs-rest mean over classes where ROC AUC is defined.
pub fn auroc_macro(preds: &[ProbVector], labels: &[usize]) -> Result<Option<f64>> {
    Ok(mean_defined(&one_vs_rest(preds, labels, auroc_binary)?))
}

/// Unweighted one-vs-rest mean over classes where average precision is
/// defined.
pub fn auprc_macro(preds: &[ProbVector], labels: &[usize]) -> Result<Option<f64>> {
    Ok(mean_defined(&one_vs_rest(preds, labels, auprc_binary)?))
}

pub fn evaluate(preds: &[ProbVector], labels: &[usize]) -> Result<EvalResult> {
    let acc = accuracy(preds, labels)?;
    let rocs = one_vs_rest(preds, labels, auroc_binary)?;
    let prcs = one_vs_rest(preds, labels, auprc_binary)?;
    let per_class = (0..rocs.len())
        .map(|c| {
            let members: Vec<&ProbVector> = preds
                .iter()
                .zip(labels)
                .filter(|(_, &y)| y == c)
                .map(|(p, _)| p)
                .collect();
            let support = members.len();
            let recall = (support > 0).then(|| {
                members.iter().filter(|p| p.argmax() == c).count() as f64 / support as f64
            });
            ClassMetrics {
                class: c,
                support,
                recall,
                auroc: rocs[c],
                auprc: prcs[c],
            }
        })
        .collect();
    Ok(EvalResult {
        n: preds.len(),
        accuracy: acc,
        auroc: mean_defined(&rocs),
        auprc: mean_defined(&prcs),
        per_class,
    })
}
