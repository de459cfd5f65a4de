//! Datasets, file ingestion, and the synthetic prior-shift benchmark.

mod blobs;
mod csv_io;
mod dataset;
mod idx;
mod shift;

pub use blobs::{make_blobs, CENTER_DISTANCE};
pub use csv_io::{load_csv, read_csv, save_csv, write_csv, LABEL_COLUMN};
pub use dataset::{Dataset, Split};
pub use idx::{load_idx, parse_idx, IDX_CLASSES};
pub use shift::{apply_shift, DomainSplits, Sampling, ShiftOptions, ShiftSpec, ShiftedData, SplitRatios};
