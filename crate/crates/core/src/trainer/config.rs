use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::model::AdamConfig;

/// The four compared methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Source hypothesis evaluated directly, no training.
    #[serde(rename = "SH")]
    SourceOnly,
    /// Target data only, plain cross-entropy.
    #[serde(rename = "TD")]
    TargetOnly,
    /// Static distillation, fixed weights.
    #[serde(rename = "skdHTL")]
    StaticKd,
    /// Dynamic distillation, instance-wise weights.
    #[serde(rename = "dkdHTL")]
    DynamicKd,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::SourceOnly,
        Method::TargetOnly,
        Method::StaticKd,
        Method::DynamicKd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SourceOnly => "SH",
            Method::TargetOnly => "TD",
            Method::StaticKd => "skdHTL",
            Method::DynamicKd => "dkdHTL",
        }
    }

    pub fn uses_source(self) -> bool {
        !matches!(self, Method::TargetOnly)
    }

    pub fn trains(self) -> bool {
        !matches!(self, Method::SourceOnly)
    }

    /// Distillation settings used when none are configured.
    pub fn default_distill(self) -> DistillConfig {
        match self {
            Method::StaticKd => DistillConfig::static_default(),
            _ => DistillConfig::dynamic_default(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub distill: DistillConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Epochs without a new best validation accuracy before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch_size() -> usize {
    32
}

fn default_max_epochs() -> usize {
    200
}

fn default_patience() -> usize {
    10
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        TrainConfig {
            method,
            distill: method.default_distill(),
            adam: AdamConfig::default(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
        }
    }

    pub fn with_distill(mut self, distill: DistillConfig) -> Self {
        self.distill = distill;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        self.adam.validate()?;
        self.distill.validate()?;
        if self.method == Method::StaticKd && self.distill.delta != 0.0 {
            return Err(Error::invalid(format!(
                "skdHTL uses fixed weights, delta must be 0 (got {})",
                self.distill.delta
            )));
        }
        Ok(())
    }
}
