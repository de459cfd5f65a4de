//! Probability and logit vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum deviation of a probability vector's sum from one before it is
/// rejected instead of renormalized.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// A distribution over `C` classes. Holds hard labels (one-hot) as well as
/// predicted and softened distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates `values` and renormalizes them so they sum to one.
    ///
    /// Entries must be finite and lie in `[0, 1]`, and the sum must be within
    /// [`SUM_TOLERANCE`] of one. Anything else is rejected.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("probability vector is empty"));
        }
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0 + SUM_TOLERANCE).contains(&v) {
                return Err(Error::invalid(format!(
                    "probability entry {j} is {v}, outside [0, 1]"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "probabilities sum to {sum}, expected 1 within {SUM_TOLERANCE}"
            )));
        }
        let values = values.into_iter().map(|v| (v / sum).min(1.0)).collect();
        Ok(ProbVector(values))
    }

    /// Wraps values that are normalized by construction (softmax outputs).
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        ProbVector(values)
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::invalid(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut values = vec![0.0; num_classes];
        values[class] = 1.0;
        Ok(ProbVector(values))
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("uniform distribution over zero classes"));
        }
        Ok(ProbVector(vec![1.0 / num_classes as f64; num_classes]))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ProbVector::new(values)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// Unconstrained network outputs. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("logit vector is empty"));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "logit {j} is not finite ({})",
                values[j]
            )));
        }
        Ok(LogitVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        LogitVector(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}
