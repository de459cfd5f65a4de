//! Command-line front end for dkdHTL experiments: data generation, source
//! training, serving a source over TCP, the method comparison, and the
//! hyperparameter grid.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

use std::fmt;

pub use config::ExperimentConfig;
pub use pipeline::SourceLocator;

/// A problem with the configuration or command line, found before any work.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Process exit status for an error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use dkdhtl_core::Error;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Transport { .. } | Error::Protocol(_) => 4,
                Error::Numerical { .. } => 5,
                Error::InvalidArgument(_) | Error::Format { .. } | Error::Checkpoint(_) | Error::Io(_) => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}
