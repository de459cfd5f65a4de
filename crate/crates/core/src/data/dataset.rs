use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ProbVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Labeled feature rows. Labels are class indices; [`Dataset::label_vector`]
/// gives the one-hot form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Option<Split>,
    provenance: String,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if let Some(first) = features.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::invalid("feature rows are empty"));
            }
            if let Some(i) = features.iter().position(|r| r.len() != d) {
                return Err(Error::invalid(format!(
                    "row {i} has {} features, expected {d}",
                    features[i].len()
                )));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y >= num_classes) {
            return Err(Error::invalid(format!(
                "row {i} has label {} but there are {num_classes} classes",
                labels[i]
            )));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            split: None,
            provenance: provenance.into(),
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Option<Split> {
        self.split
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_vector(&self, i: usize) -> ProbVector {
        ProbVector::one_hot(self.labels[i], self.num_classes).expect("labels validated")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Empirical class priors; all zeros for an empty set.
    pub fn class_priors(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.class_counts().into_iter().map(|c| c as f64 / n).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
            provenance: self.provenance.clone(),
        }
    }

    pub(crate) fn map_features(&mut self, f: impl Fn(&mut [f64])) {
        for row in &mut self.features {
            f(row);
        }
    }
}
