//! Target training and the method comparison protocol.

mod config;
mod protocol;
mod train;

pub use config::{Method, TrainConfig};
pub use protocol::{
    grid_search, mean_std, run_protocol, GridCell, GridResult, GridRow, GridSpec, MethodResult,
};
pub use train::{evaluate_network, evaluate_source, train, EpochRecord, SplitMetrics, TrainReport};
