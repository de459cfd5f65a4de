//! The black-box source hypothesis.
//!
//! A [`SourceHypothesis`] answers one question: the predicted probability
//! vector for a feature vector. Parameters, logits, and gradients of the
//! underlying model are not reachable through it. Backends run in-process,
//! replay a recorded prediction file, or query a prediction server over TCP.
//!
//! ```compile_fail
//! # use dkdhtl_core::{hypothesis::SourceHypothesis, model::init_network};
//! let h = SourceHypothesis::in_process(init_network(&[2, 2], 0).unwrap()).unwrap();
//! let _ = h.network(); // no parameter accessor
//! ```
//!
//! ```compile_fail
//! # use dkdhtl_core::{hypothesis::SourceHypothesis, model::init_network};
//! let h = SourceHypothesis::in_process(init_network(&[2, 2], 0).unwrap()).unwrap();
//! let _ = &h.backend; // backend handle is private
//! ```

mod cache;
mod remote;
mod server;
pub mod wire;

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::TargetNetwork;
use crate::prob::ProbVector;

pub use cache::{feature_key, PredictionCache};
pub use remote::RemoteBackend;
pub use server::{serve, PredictionServer, ServerHandle};

/// Something that maps feature vectors to probability vectors.
///
/// Backends return raw values; [`SourceHypothesis`] validates them. A backend
/// must be deterministic.
pub trait ProbabilityBackend: Send + Sync {
    fn num_classes(&self) -> usize;

    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn predict_raw_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.predict_raw(x)).collect()
    }
}

/// Wraps a trained network as a backend.
pub(crate) struct InProcessBackend {
    net: TargetNetwork,
}

impl InProcessBackend {
    pub(crate) fn new(net: TargetNetwork) -> Self {
        InProcessBackend { net }
    }
}

impl ProbabilityBackend for InProcessBackend {
    fn num_classes(&self) -> usize {
        self.net.num_classes()
    }

    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.predict_proba(x)?.into_vec())
    }
}

/// Validates a backend answer. Malformed vectors are protocol errors.
pub(crate) fn validate_probs(raw: Vec<f64>, num_classes: usize) -> Result<ProbVector> {
    if raw.len() != num_classes {
        return Err(Error::Protocol(format!(
            "backend returned {} probabilities for {num_classes} classes",
            raw.len()
        )));
    }
    ProbVector::new(raw).map_err(|e| Error::Protocol(format!("backend returned invalid probabilities: {e}")))
}

/// A fixed source model visible only through its predicted probabilities.
pub struct SourceHypothesis {
    backend: Box<dyn ProbabilityBackend>,
    num_classes: usize,
}

impl std::fmt::Debug for SourceHypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceHypothesis")
            .field("num_classes", &self.num_classes)
            .finish_non_exhaustive()
    }
}

impl SourceHypothesis {
    /// Registers a backend after checking that two queries on `probe` agree
    /// bit for bit. Stochastic backends are rejected.
    pub fn register(backend: Box<dyn ProbabilityBackend>, probe: &[f64]) -> Result<Self> {
        let num_classes = backend.num_classes();
        if num_classes < 2 {
            return Err(Error::invalid("source hypothesis must have at least two classes"));
        }
        let first = backend.predict_raw(probe)?;
        let second = backend.predict_raw(probe)?;
        let same = first.len() == second.len()
            && first.iter().zip(&second).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::invalid("source hypothesis is not deterministic"));
        }
        validate_probs(first, num_classes)?;
        Ok(SourceHypothesis {
            backend,
            num_classes,
        })
    }

    pub fn in_process(net: TargetNetwork) -> Result<Self> {
        let probe = vec![0.0; net.input_dim()];
        Self::register(Box::new(InProcessBackend::new(net)), &probe)
    }

    /// Connects to a prediction server. `input_dim` is used for the
    /// registration probe only.
    pub fn remote(addr: &str, input_dim: usize) -> Result<Self> {
        let backend = RemoteBackend::connect(addr)?;
        Self::register(Box::new(backend), &vec![0.0; input_dim])
    }

    /// Replays a recorded prediction file. Unrecorded inputs are errors.
    pub fn replay(path: &Path) -> Result<Self> {
        let cache = PredictionCache::open_replay(path)?;
        let num_classes = cache.num_classes();
        Ok(SourceHypothesis {
            backend: Box::new(cache),
            num_classes,
        })
    }

    /// Puts a read-through prediction cache in front of `inner`. With a
    /// path, every new answer is appended to that file.
    pub fn cached(inner: SourceHypothesis, path: Option<&Path>) -> Result<Self> {
        let num_classes = inner.num_classes;
        let cache = PredictionCache::wrap(inner.backend, path)?;
        Ok(SourceHypothesis {
            backend: Box::new(cache),
            num_classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn predict(&self, x: &[f64]) -> Result<ProbVector> {
        validate_probs(self.backend.predict_raw(x)?, self.num_classes)
    }

    /// Elementwise [`predict`](Self::predict), order preserved. Any failure
    /// aborts the whole batch.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<ProbVector>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let raw = self.backend.predict_raw_batch(xs)?;
        if raw.len() != xs.len() {
            return Err(Error::Protocol(format!(
                "backend answered {} of {} batch queries",
                raw.len(),
                xs.len()
            )));
        }
        raw.into_iter()
            .map(|r| validate_probs(r, self.num_classes))
            .collect()
    }
}
