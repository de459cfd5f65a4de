use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed input file. `location` names the line or byte offset.
    #[error("format error in {source_name} at {location}: {message}")]
    Format {
        source_name: String,
        location: String,
        message: String,
    },

    /// Remote source hypothesis unreachable or the connection dropped.
    #[error("transport error after {attempts} attempt(s) (retryable: {retryable}): {message}")]
    Transport {
        message: String,
        attempts: u32,
        retryable: bool,
    },

    /// A peer (or backend) produced a response that violates the protocol,
    /// including probability vectors that do not sum to one.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numerical failure at epoch {epoch}, batch {batch}, instance {instance}: {detail}")]
    Numerical {
        epoch: usize,
        batch: usize,
        instance: usize,
        detail: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(
        source_name: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            source_name: source_name.into(),
            location: location.into(),
            message: message.into(),
        }
    }
}
