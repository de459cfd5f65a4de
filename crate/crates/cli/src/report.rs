//! Report assembly and formatting.
//!
//! Machine-readable files are pretty-printed JSON (or JSON lines) with no
//! timestamps or wall times, so identical runs produce identical bytes.
//! Human-readable tables are Markdown: percentages with two decimals, the
//! across-seed standard deviation in brackets, and the best trained method
//! in bold.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use dkdhtl_core::metrics::EvalResult;
use dkdhtl_core::trainer::{mean_std, GridResult, Method};
use dkdhtl_core::DistillConfig;

use crate::pipeline::SeedRun;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        mean_std(values).map(|(mean, std)| Stat { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: Stat,
    /// Absent when some seed left the metric undefined.
    pub auroc: Option<Stat>,
    pub auprc: Option<Stat>,
}

impl MetricSummary {
    fn of(evals: &[&EvalResult]) -> Option<MetricSummary> {
        let acc: Vec<f64> = evals.iter().map(|e| e.accuracy).collect();
        let all = |f: fn(&EvalResult) -> Option<f64>| -> Option<Vec<f64>> { evals.iter().map(|e| f(e)).collect() };
        Some(MetricSummary {
            accuracy: Stat::of(&acc)?,
            auroc: all(|e| e.auroc).and_then(|v| Stat::of(&v)),
            auprc: all(|e| e.auprc).and_then(|v| Stat::of(&v)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Loss settings, for the distillation methods.
    pub distill: Option<DistillConfig>,
    pub test: MetricSummary,
    pub val: Option<MetricSummary>,
    pub train: Option<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
    pub runs: Vec<SeedRun>,
}

impl RunReport {
    pub fn new(runs: Vec<SeedRun>) -> Self {
        let seeds = runs.iter().map(|r| r.seed).collect();
        let methods = runs
            .first()
            .map(|r| r.results.iter().map(|m| m.method).collect::<Vec<_>>())
            .unwrap_or_default();
        let methods = methods
            .into_iter()
            .enumerate()
            .map(|(k, method)| {
                let results: Vec<_> = runs.iter().map(|r| &r.results[k]).collect();
                let split = |f: fn(&dkdhtl_core::trainer::MethodResult) -> Option<&EvalResult>| {
                    let evals: Option<Vec<&EvalResult>> = results.iter().map(|r| f(r)).collect();
                    evals.and_then(|e| MetricSummary::of(&e))
                };
                MethodSummary {
                    method,
                    distill: results[0].report.as_ref().filter(|_| method.uses_source()).map(|r| r.config.distill),
                    test: split(|r| Some(&r.test)).expect("every run has test metrics"),
                    val: split(|r| r.val.as_ref()),
                    train: split(|r| r.train.as_ref()),
                }
            })
            .collect();
        RunReport { seeds, methods, runs }
    }

    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Markdown table in the method comparison layout.
    pub fn to_table(&self) -> String {
        let best = self
            .methods
            .iter()
            .filter(|m| m.method.trains())
            .map(|m| pct(m.test.accuracy.mean))
            .max_by(|a, b| a.total_cmp(b));
        let show_std = self.seeds.len() > 1;
        let mut out = String::new();
        writeln!(out, "| METHOD | test acc | val acc | train acc | test auROC | test auPRC |").unwrap();
        writeln!(out, "|---|---|---|---|---|---|").unwrap();
        for m in &self.methods {
            let mut test = cell(Some(m.test.accuracy), show_std);
            if m.method.trains() && Some(pct(m.test.accuracy.mean)) == best {
                test = format!("**{test}**");
            }
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                m.method,
                test,
                cell(m.val.as_ref().map(|s| s.accuracy), show_std),
                cell(m.train.as_ref().map(|s| s.accuracy), show_std),
                cell(m.test.auroc, show_std),
                cell(m.test.auprc, show_std),
            )
            .unwrap();
        }
        writeln!(out).unwrap();
        writeln!(
            out,
            "Percentages; mean over seeds {:?}{}.",
            self.seeds,
            if show_std { " with standard deviation in brackets" } else { "" }
        )
        .unwrap();
        out
    }
}

fn pct(v: f64) -> f64 {
    (v * 10000.0).round() / 100.0
}

fn cell(stat: Option<Stat>, show_std: bool) -> String {
    match stat {
        None => "-".to_string(),
        Some(s) if show_std => format!("{:.2} ({:.2})", 100.0 * s.mean, 100.0 * s.std),
        Some(s) => format!("{:.2}", 100.0 * s.mean),
    }
}

/// Markdown table in the hyperparameter grid layout: rows `(lambda, delta)`,
/// one column per temperature, and averages along both directions.
pub fn grid_table(grid: &GridResult) -> String {
    let best = grid.best().map(|c| pct(c.mean));
    let mut out = String::new();
    let temps: Vec<String> = grid.temperatures.iter().map(|t| format!("T={t}")).collect();
    writeln!(out, "| lambda | delta | {} | AVERAGE |", temps.join(" | ")).unwrap();
    writeln!(out, "|---|---|{}---|", "---|".repeat(temps.len())).unwrap();
    for row in &grid.rows {
        let cells: Vec<String> = if row.valid {
            row.cells
                .iter()
                .map(|c| {
                    let text = format!("{:.2}", 100.0 * c.mean);
                    if Some(pct(c.mean)) == best {
                        format!("**{text}**")
                    } else {
                        text
                    }
                })
                .collect()
        } else {
            vec!["invalid".to_string(); grid.temperatures.len()]
        };
        let avg = row.average.map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a));
        writeln!(out, "| {} | {} | {} | {avg} |", row.lambda, row.delta, cells.join(" | ")).unwrap();
    }
    let cols: Vec<String> = grid
        .column_averages
        .iter()
        .map(|a| a.map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a)))
        .collect();
    writeln!(out, "| AVERAGE | | {} | - |", cols.join(" | ")).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "Mean test accuracy (%) of dkdHTL; rows with lambda + delta > 1 are not run.").unwrap();
    out
}

/// Collects the files written into a run directory and records them in
/// `manifest.json`.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name)?;
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<()> {
        let path = self.path(name)?;
        let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        for r in records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, command: &str, details: serde_json::Value) -> Result<()> {
        let mut files = self.files.clone();
        files.sort();
        let manifest = serde_json::json!({
            "command": command,
            "files": files,
            "details": details,
        });
        self.write_json("manifest.json", &manifest)
    }
}
