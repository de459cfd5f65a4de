use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use super::train::{evaluate_source, train, TrainReport};
use crate::data::DomainSplits;
use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::hypothesis::SourceHypothesis;
use crate::metrics::EvalResult;
use crate::model::init_network;

const WEIGHT_SUM_SLACK: f64 = 1e-9;

/// One row of the method comparison. SH has no validation or training
/// metrics and no training report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub test: EvalResult,
    pub val: Option<EvalResult>,
    pub train: Option<EvalResult>,
    pub report: Option<TrainReport>,
}

/// Runs each configured method on the target splits. Trained methods start
/// from a network initialized with `layer_sizes` and the config seed.
/// Results keep the order of `configs`.
pub fn run_protocol(
    source: &SourceHypothesis,
    data: &DomainSplits,
    layer_sizes: &[usize],
    configs: &[TrainConfig],
) -> Result<Vec<MethodResult>> {
    configs
        .par_iter()
        .map(|cfg| run_method(source, data, layer_sizes, cfg))
        .collect()
}

fn run_method(
    source: &SourceHypothesis,
    data: &DomainSplits,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<MethodResult> {
    if cfg.method == Method::SourceOnly {
        return Ok(MethodResult {
            method: cfg.method,
            test: evaluate_source(source, &data.test)?,
            val: None,
            train: None,
            report: None,
        });
    }
    let net = init_network(layer_sizes, cfg.seed)?;
    let (_, report) = train(net, Some(source), data, cfg)?;
    Ok(MethodResult {
        method: cfg.method,
        test: report.metrics.test.clone(),
        val: Some(report.metrics.val.clone()),
        train: Some(report.metrics.train.clone()),
        report: Some(report),
    })
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambdas", self.lambdas.len()),
            ("deltas", self.deltas.len()),
            ("temperatures", self.temperatures.len()),
            ("seeds", self.seeds.len()),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("grid {name} is empty")));
            }
        }
        Ok(())
    }

    pub fn is_valid_pair(lambda: f64, delta: f64) -> bool {
        lambda + delta <= 1.0 + WEIGHT_SUM_SLACK
    }
}

/// Test accuracy of one (lambda, delta, T) cell over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda: f64,
    pub delta: f64,
    pub temperature: f64,
    pub test_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Cells sharing `(lambda, delta)`, one per temperature. Rows with
/// `lambda + delta > 1` are kept as markers with no cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f64,
    pub delta: f64,
    pub valid: bool,
    pub cells: Vec<GridCell>,
    /// Mean of the cell means across temperatures.
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub temperatures: Vec<f64>,
    pub rows: Vec<GridRow>,
    /// Per temperature, mean of the cell means over valid rows.
    pub column_averages: Vec<Option<f64>>,
}

impl GridResult {
    pub fn cell(&self, lambda: f64, delta: f64, temperature: f64) -> Option<&GridCell> {
        self.rows
            .iter()
            .find(|r| r.lambda == lambda && r.delta == delta)?
            .cells
            .iter()
            .find(|c| c.temperature == temperature)
    }

    pub fn best(&self) -> Option<&GridCell> {
        self.rows
            .iter()
            .flat_map(|r| &r.cells)
            .fold(None, |best: Option<&GridCell>, c| match best {
                Some(b) if b.mean >= c.mean => Some(b),
                _ => Some(c),
            })
    }
}

/// Trains dkdHTL for every valid cell of the grid and seed. `base` supplies
/// everything except the distillation settings and the seed. `on_cell` sees
/// each finished cell as soon as all its seeds are done, in completion order.
pub fn grid_search(
    source: &SourceHypothesis,
    data: &DomainSplits,
    layer_sizes: &[usize],
    base: &TrainConfig,
    spec: &GridSpec,
    on_cell: impl Fn(&GridCell) + Sync,
) -> Result<GridResult> {
    spec.validate()?;
    let floor = base.distill.prob_floor;
    let mut jobs = Vec::new();
    for &lambda in &spec.lambdas {
        for &delta in &spec.deltas {
            if !GridSpec::is_valid_pair(lambda, delta) {
                continue;
            }
            for &t in &spec.temperatures {
                let distill = DistillConfig::new(lambda, delta, t)?.with_floor(floor)?;
                jobs.push(distill);
            }
        }
    }

    let cells: Vec<GridCell> = jobs
        .par_iter()
        .map(|distill| {
            let accs = spec
                .seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = TrainConfig {
                        method: Method::DynamicKd,
                        distill: *distill,
                        seed,
                        ..*base
                    };
                    let net = init_network(layer_sizes, seed)?;
                    Ok(train(net, Some(source), data, &cfg)?.1.metrics.test.accuracy)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_std(&accs).expect("seeds nonempty");
            let cell = GridCell {
                lambda: distill.lambda,
                delta: distill.delta,
                temperature: distill.temperature,
                test_accuracy: accs,
                mean,
                std,
            };
            on_cell(&cell);
            Ok(cell)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut cells = cells.into_iter();
    for &lambda in &spec.lambdas {
        for &delta in &spec.deltas {
            let valid = GridSpec::is_valid_pair(lambda, delta);
            let row_cells: Vec<GridCell> = if valid {
                cells.by_ref().take(spec.temperatures.len()).collect()
            } else {
                Vec::new()
            };
            let means: Vec<f64> = row_cells.iter().map(|c| c.mean).collect();
            rows.push(GridRow {
                lambda,
                delta,
                valid,
                average: mean_std(&means).map(|(m, _)| m),
                cells: row_cells,
            });
        }
    }
    let column_averages = (0..spec.temperatures.len())
        .map(|k| {
            let col: Vec<f64> = rows.iter().filter(|r| r.valid).map(|r| r.cells[k].mean).collect();
            mean_std(&col).map(|(m, _)| m)
        })
        .collect();
    Ok(GridResult {
        temperatures: spec.temperatures.clone(),
        rows,
        column_averages,
    })
}
