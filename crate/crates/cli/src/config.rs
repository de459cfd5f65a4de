//! Experiment configuration, read from TOML.
//!
//! ```toml
//! methods = ["SH", "TD", "skdHTL", "dkdHTL"]
//! seeds = [0, 1, 2, 3, 4]
//! out = "runs/blobs"            # optional, DKDHTL_OUT or --out otherwise
//!
//! [data]                        # where the pool comes from
//! kind = "blobs"                # or "csv" (path, classes) or "idx" (images, labels)
//! n_per_class = 300
//! classes = 5
//! dim = 10
//! spread = 0.9
//! seed = 1
//!
//! [shift]
//! omit = [3]
//! target_fraction = 0.1
//! seed = 2
//!
//! [source]                      # how the source hypothesis is obtained
//! seed = 3
//!
//! [source.train]                # used when the source is trained here
//! hidden = [64]
//!
//! [target]                      # target network and training settings
//! hidden = [64]
//!
//! [static_kd]                   # skdHTL
//! lambda = 0.5
//! delta = 0.0
//! temperature = 2.0
//!
//! [dynamic_kd]                  # dkdHTL
//! lambda = 0.1
//! delta = 0.9
//! temperature = 2.0
//!
//! [grid]
//! lambdas = [0.1, 0.3, 0.5]
//! deltas = [0.3, 0.5, 0.7]
//! temperatures = [2.0, 3.0, 4.0]
//! ```
//!
//! Every key is optional except `data`; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dkdhtl_core::data::{Sampling, ShiftOptions, ShiftSpec, SplitRatios};
use dkdhtl_core::distill::DEFAULT_PROB_FLOOR;
use dkdhtl_core::trainer::{GridSpec, Method, TrainConfig};
use dkdhtl_core::{AdamConfig, DistillConfig};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub shift: ShiftConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub target: NetConfig,
    #[serde(default = "DistillConfig::static_default")]
    pub static_kd: DistillConfig,
    #[serde(default = "DistillConfig::dynamic_default")]
    pub dynamic_kd: DistillConfig,
    #[serde(default)]
    pub grid: GridConfig,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Blobs {
        #[serde(default = "default_n_per_class")]
        n_per_class: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        classes: usize,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

fn default_n_per_class() -> usize {
    300
}

fn default_classes() -> usize {
    5
}

fn default_dim() -> usize {
    10
}

fn default_spread() -> f64 {
    0.9
}

fn default_label_column() -> String {
    dkdhtl_core::data::LABEL_COLUMN.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    #[serde(default = "default_omit")]
    pub omit: Vec<usize>,
    #[serde(default = "default_fraction")]
    pub target_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub ratios: SplitRatios,
}

fn default_omit() -> Vec<usize> {
    vec![3]
}

fn default_fraction() -> f64 {
    0.1
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            omit: default_omit(),
            target_fraction: default_fraction(),
            seed: 0,
            sampling: Sampling::default(),
            standardize: false,
            ratios: SplitRatios::default(),
        }
    }
}

impl ShiftConfig {
    pub fn spec(&self) -> ShiftSpec {
        ShiftSpec::new(self.omit.iter().copied(), self.target_fraction, self.seed)
    }

    pub fn options(&self) -> ShiftOptions {
        ShiftOptions {
            ratios: self.ratios,
            sampling: self.sampling,
            standardize: self.standardize,
        }
    }
}

/// Network shape and optimizer settings shared by source and target
/// training. An unset `batch_size` means 8 for the target and 32 for the
/// source: the target domain has only about a hundred training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_floor")]
    pub prob_floor: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

fn default_learning_rate() -> f64 {
    0.01
}

pub const TARGET_BATCH_SIZE: usize = 8;
pub const SOURCE_BATCH_SIZE: usize = 32;

fn default_max_epochs() -> usize {
    200
}

fn default_patience() -> usize {
    10
}

fn default_floor() -> f64 {
    DEFAULT_PROB_FLOOR
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: default_hidden(),
            learning_rate: default_learning_rate(),
            batch_size: None,
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            prob_floor: default_floor(),
        }
    }
}

impl NetConfig {
    pub fn layer_sizes(&self, input_dim: usize, classes: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(classes);
        sizes
    }

    pub fn train_config(
        &self,
        method: Method,
        distill: DistillConfig,
        seed: u64,
        default_batch: usize,
    ) -> TrainConfig {
        TrainConfig {
            method,
            distill: DistillConfig {
                prob_floor: self.prob_floor,
                ..distill
            },
            adam: AdamConfig::with_learning_rate(self.learning_rate),
            batch_size: self.batch_size.unwrap_or(default_batch),
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// `inproc`, `file:PATH`, or `tcp:HOST:PORT`; `--source` overrides it.
    #[serde(default)]
    pub locator: Option<String>,
    /// With `inproc`, load this checkpoint instead of training a source.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Read-through prediction cache file.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Network and optimizer used when the source is trained here.
    #[serde(default)]
    pub train: NetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.1, 0.3, 0.5]
}

fn default_deltas() -> Vec<f64> {
    vec![0.3, 0.5, 0.7]
}

fn default_temperatures() -> Vec<f64> {
    vec![2.0, 3.0, 4.0]
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lambdas: default_lambdas(),
            deltas: default_deltas(),
            temperatures: default_temperatures(),
        }
    }
}

impl GridConfig {
    pub fn spec(&self, seeds: &[u64]) -> GridSpec {
        GridSpec {
            lambdas: self.lambdas.clone(),
            deltas: self.deltas.clone(),
            temperatures: self.temperatures.clone(),
            seeds: seeds.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError(msg));
        if self.methods.is_empty() {
            return bad("methods list is empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds list is empty".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods list repeats a method".into());
        }
        if let DataConfig::Blobs { classes, .. } = &self.data {
            if let Some(c) = self.shift.omit.iter().find(|&&c| c >= *classes) {
                return bad(format!("shift.omit names class {c}, data has {classes}"));
            }
        }
        if !(self.shift.target_fraction > 0.0 && self.shift.target_fraction <= 1.0) {
            return bad(format!("shift.target_fraction {} outside (0, 1]", self.shift.target_fraction));
        }
        self.shift.ratios.validate().map_err(|e| ConfigError(format!("shift.ratios: {e}")))?;
        for (name, net) in [("source.train", &self.source.train), ("target", &self.target)] {
            if net.hidden.contains(&0) {
                return bad(format!("{name}.hidden has a zero-width layer"));
            }
            let probe = net.train_config(Method::TargetOnly, DistillConfig::dynamic_default(), 0, 1);
            probe.validate().map_err(|e| ConfigError(format!("{name}: {e}")))?;
        }
        for (name, method, d) in [
            ("static_kd", Method::StaticKd, self.static_kd),
            ("dynamic_kd", Method::DynamicKd, self.dynamic_kd),
        ] {
            self.target
                .train_config(method, d, 0, 1)
                .validate()
                .map_err(|e| ConfigError(format!("{name}: {e}")))?;
        }
        self.grid
            .spec(&self.seeds)
            .validate()
            .map_err(|e| ConfigError(format!("grid: {e}")))?;
        for &t in &self.grid.temperatures {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("grid temperature {t} must be positive"));
            }
        }
        for &v in self.grid.lambdas.iter().chain(&self.grid.deltas) {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("grid weight {v} outside [0, 1]"));
            }
        }
        if let Some(loc) = &self.source.locator {
            crate::pipeline::SourceLocator::parse(loc)?;
        }
        Ok(())
    }

    /// Training settings of `method` on the target domain.
    pub fn target_config(&self, method: Method, seed: u64) -> TrainConfig {
        let distill = match method {
            Method::StaticKd => self.static_kd,
            _ => self.dynamic_kd,
        };
        self.target.train_config(method, distill, seed, TARGET_BATCH_SIZE)
    }

    pub fn source_config(&self) -> TrainConfig {
        self.source
            .train
            .train_config(
                Method::TargetOnly,
                DistillConfig::dynamic_default(),
                self.source.seed,
                SOURCE_BATCH_SIZE,
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\nkind = \"blobs\"\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        assert_eq!(cfg.seeds.len(), 5);
        assert_eq!(cfg.static_kd, DistillConfig::static_default());
        assert_eq!(cfg.dynamic_kd, DistillConfig::dynamic_default());
        assert_eq!(cfg.shift.omit, vec![3]);
        assert_eq!(cfg.grid.lambdas, vec![0.1, 0.3, 0.5]);
        assert_eq!(cfg.target_config(Method::TargetOnly, 0).batch_size, TARGET_BATCH_SIZE);
        assert_eq!(cfg.source_config().batch_size, SOURCE_BATCH_SIZE);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "colour = 1\n[data]\nkind = \"blobs\"\n",
            "[data]\nkind = \"blobs\"\nwidth = 3\n",
            "[data]\nkind = \"blobs\"\n[target]\nhiden = [3]\n",
            "[data]\nkind = \"blobs\"\n[dynamic_kd]\nlambda = 0.1\ndelta = 0.9\ntemperature = 2.0\nbeta = 1\n",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for extra in [
            "[static_kd]\nlambda = 0.5\ndelta = 0.3\ntemperature = 2.0\n",
            "[dynamic_kd]\nlambda = 0.6\ndelta = 0.9\ntemperature = 2.0\n",
            "[shift]\nomit = [7]\n",
            "[target]\nbatch_size = 0\n",
            "[source]\nlocator = \"udp:1\"\n",
        ] {
            let text = format!("{MINIMAL}{extra}");
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{text}");
        }
        assert!(ExperimentConfig::from_toml("methods = []\n[data]\nkind = \"blobs\"\n").is_err());
    }
}
