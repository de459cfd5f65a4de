//! Hypothesis transfer learning with dynamic knowledge distillation.
//!
//! A target network is trained on a small labeled target set while a fixed
//! source hypothesis, reachable only through its predicted probabilities,
//! supplies softened labels. Each instance mixes the two losses with weights
//! driven by how well the source agrees with the ground truth on it.
//!
//! The crate covers the loss math ([`distill`]), the network and optimizer
//! ([`model`]), black-box source access including a TCP prediction server
//! ([`hypothesis`]), synthetic and file-based data with controlled label
//! shift ([`data`]), training and the method comparison ([`trainer`]), and
//! evaluation ([`metrics`]).

pub mod data;
pub mod distill;
pub mod error;
pub mod hypothesis;
pub mod metrics;
pub mod model;
pub mod prob;
pub mod trainer;

pub use distill::{DistillConfig, InstanceLoss, WeightPair};
pub use error::{Error, Result};
pub use hypothesis::SourceHypothesis;
pub use metrics::EvalResult;
pub use model::{AdamConfig, TargetNetwork};
pub use prob::{LogitVector, ProbVector};
pub use trainer::{Method, TrainConfig, TrainReport};
