//! Building blocks shared by the commands: data preparation, obtaining the
//! source hypothesis, and running the comparison over seeds.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use dkdhtl_core::data::{apply_shift, load_csv, load_idx, make_blobs, Dataset, ShiftedData};
use dkdhtl_core::model::checkpoint::is_checkpoint;
use dkdhtl_core::model::{init_network, load_checkpoint};
use dkdhtl_core::trainer::{grid_search, run_protocol, train, GridCell, GridResult, MethodResult, TrainReport};
use dkdhtl_core::{SourceHypothesis, TargetNetwork};

use crate::config::{DataConfig, ExperimentConfig};
use crate::ConfigError;

pub fn load_pool(cfg: &DataConfig) -> Result<Dataset> {
    Ok(match cfg {
        DataConfig::Blobs {
            n_per_class,
            classes,
            dim,
            spread,
            seed,
        } => make_blobs(*n_per_class, *classes, *dim, *spread, *seed)?,
        DataConfig::Csv {
            path,
            classes,
            label_column,
        } => load_csv(path, label_column, *classes)?,
        DataConfig::Idx { images, labels } => load_idx(images, labels)?,
    })
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<ShiftedData> {
    let pool = load_pool(&cfg.data)?;
    Ok(apply_shift(&pool, &cfg.shift.spec(), &cfg.shift.options())?)
}

/// Trains the source network on the source domain.
pub fn train_source(cfg: &ExperimentConfig, data: &ShiftedData) -> Result<(TargetNetwork, TrainReport)> {
    let train_cfg = cfg.source_config();
    let sizes = cfg
        .source
        .train
        .layer_sizes(data.source.train.dim(), data.source.train.num_classes());
    let net = init_network(&sizes, train_cfg.seed)?;
    Ok(train(net, None, &data.source, &train_cfg)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceLocator {
    InProcess,
    File(PathBuf),
    Tcp(String),
}

impl SourceLocator {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text == "inproc" {
            Ok(SourceLocator::InProcess)
        } else if let Some(path) = text.strip_prefix("file:").filter(|p| !p.is_empty()) {
            Ok(SourceLocator::File(PathBuf::from(path)))
        } else if let Some(addr) = text.strip_prefix("tcp:").filter(|a| a.contains(':')) {
            Ok(SourceLocator::Tcp(addr.to_string()))
        } else {
            Err(ConfigError(format!(
                "source {text:?} is not inproc, file:PATH or tcp:HOST:PORT"
            )))
        }
    }
}

/// The source hypothesis and a one-line description of where it came from.
pub struct ResolvedSource {
    pub hypothesis: SourceHypothesis,
    pub description: String,
    /// Set when the source was trained in this run.
    pub training: Option<TrainReport>,
}

fn is_checkpoint_file(path: &Path) -> Result<bool> {
    let bytes = fs::read(path).with_context(|| format!("reading source file {}", path.display()))?;
    Ok(is_checkpoint(&bytes))
}

/// Obtains the source hypothesis. `inproc` loads `source.checkpoint` when
/// set and otherwise trains a source on the source domain. `file:` accepts a
/// checkpoint or a recorded prediction file.
pub fn resolve_source(
    cfg: &ExperimentConfig,
    locator: &SourceLocator,
    data: &ShiftedData,
) -> Result<ResolvedSource> {
    let dim = data.target.train.dim();
    let (hypothesis, description, training) = match locator {
        SourceLocator::InProcess => match &cfg.source.checkpoint {
            Some(path) => (
                SourceHypothesis::in_process(load_checkpoint(path)?)?,
                format!("checkpoint {}", path.display()),
                None,
            ),
            None => {
                let (net, report) = train_source(cfg, data)?;
                (
                    SourceHypothesis::in_process(net)?,
                    "trained in process".to_string(),
                    Some(report),
                )
            }
        },
        SourceLocator::File(path) => {
            if is_checkpoint_file(path)? {
                (
                    SourceHypothesis::in_process(load_checkpoint(path)?)?,
                    format!("checkpoint {}", path.display()),
                    None,
                )
            } else {
                (
                    SourceHypothesis::replay(path)?,
                    format!("prediction file {}", path.display()),
                    None,
                )
            }
        }
        SourceLocator::Tcp(addr) => (
            SourceHypothesis::remote(addr, dim)?,
            format!("prediction server {addr}"),
            None,
        ),
    };
    let hypothesis = match &cfg.source.cache {
        Some(path) => SourceHypothesis::cached(hypothesis, Some(path))?,
        None => hypothesis,
    };
    Ok(ResolvedSource {
        hypothesis,
        description,
        training,
    })
}

/// Method results for one seed, in `cfg.methods` order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub results: Vec<MethodResult>,
}

/// Runs every configured method once per seed. The seed drives target
/// network initialization and batch order; data and source are shared.
pub fn run_seeds(
    cfg: &ExperimentConfig,
    source: &SourceHypothesis,
    data: &ShiftedData,
    seeds: &[u64],
) -> Result<Vec<SeedRun>> {
    let sizes = cfg
        .target
        .layer_sizes(data.target.train.dim(), data.target.train.num_classes());
    seeds
        .par_iter()
        .map(|&seed| {
            let configs: Vec<_> = cfg.methods.iter().map(|&m| cfg.target_config(m, seed)).collect();
            let results = run_protocol(source, &data.target, &sizes, &configs)
                .with_context(|| format!("seed {seed}"))?;
            Ok(SeedRun { seed, results })
        })
        .collect()
}

pub fn run_grid(
    cfg: &ExperimentConfig,
    source: &SourceHypothesis,
    data: &ShiftedData,
    seeds: &[u64],
    on_cell: impl Fn(&GridCell) + Sync,
) -> Result<GridResult> {
    let sizes = cfg
        .target
        .layer_sizes(data.target.train.dim(), data.target.train.num_classes());
    let base = cfg.target_config(dkdhtl_core::Method::DynamicKd, 0);
    Ok(grid_search(
        source,
        &data.target,
        &sizes,
        &base,
        &cfg.grid.spec(seeds),
        on_cell,
    )?)
}
