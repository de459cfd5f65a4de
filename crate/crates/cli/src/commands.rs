use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use serde_json::json;

use dkdhtl_core::data::{save_csv, DomainSplits, Split};
use dkdhtl_core::hypothesis::serve;
use dkdhtl_core::model::save_checkpoint;
use dkdhtl_core::trainer::{evaluate_source, GridResult, TrainReport};
use dkdhtl_core::SourceHypothesis;

use crate::config::ExperimentConfig;
use crate::pipeline::{prepare_data, resolve_source, run_grid, run_seeds, train_source, SourceLocator};
use crate::report::{grid_table, RunDir, RunReport};

fn split_manifest(domain: &DomainSplits) -> serde_json::Value {
    let splits: serde_json::Map<String, serde_json::Value> = Split::ALL
        .into_iter()
        .map(|s| {
            let ds = domain.get(s);
            (
                s.to_string(),
                json!({ "rows": ds.len(), "class_counts": ds.class_counts() }),
            )
        })
        .collect();
    json!({ "total": domain.total_len(), "splits": splits })
}

/// Writes the six domain splits as CSV files plus a manifest describing the
/// shift.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let data = prepare_data(cfg)?;
    let mut dir = RunDir::create(out)?;
    for (name, domain) in [("source", &data.source), ("target", &data.target)] {
        for split in Split::ALL {
            let path = dir.path(&format!("data/{name}_{split}.csv"))?;
            save_csv(domain.get(split), &path)?;
        }
    }
    let details = json!({
        "provenance": data.target.train.provenance(),
        "omitted_classes": cfg.shift.omit,
        "target_fraction": cfg.shift.target_fraction,
        "shift_seed": cfg.shift.seed,
        "source": split_manifest(&data.source),
        "target": split_manifest(&data.target),
    });
    dir.finish("gen-data", details)?;
    eprintln!(
        "wrote source ({} rows) and target ({} rows) to {}",
        data.source.total_len(),
        data.target.total_len(),
        out.join("data").display()
    );
    Ok(())
}

pub struct SourceOutcome {
    pub report: TrainReport,
    pub checkpoint: PathBuf,
    /// Source accuracy on the target test split, the SH value.
    pub target_test_accuracy: f64,
}

/// Trains the source on the source domain and saves `source.ckpt`.
pub fn train_source_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<SourceOutcome> {
    let data = prepare_data(cfg)?;
    let (net, report) = train_source(cfg, &data)?;
    let mut dir = RunDir::create(out)?;
    let checkpoint = dir.path("source.ckpt")?;
    save_checkpoint(&net, &checkpoint)?;
    let hypothesis = SourceHypothesis::in_process(net)?;
    let target_test = evaluate_source(&hypothesis, &data.target.test)?;
    dir.write_json("source_report.json", &report)?;
    dir.write_jsonl("epochs/source.jsonl", &report.epochs)?;
    dir.finish(
        "train-source",
        json!({
            "source_test_accuracy": report.metrics.test.accuracy,
            "target_test_accuracy": target_test.accuracy,
        }),
    )?;
    eprintln!(
        "source test accuracy {:.2}%, on target test {:.2}% ({} epochs, {:.1}s)",
        100.0 * report.metrics.test.accuracy,
        100.0 * target_test.accuracy,
        report.epochs.len(),
        report.wall_time_secs
    );
    Ok(SourceOutcome {
        report,
        checkpoint,
        target_test_accuracy: target_test.accuracy,
    })
}

pub fn serve_cmd(checkpoint: &Path, addr: &str) -> Result<()> {
    serve(checkpoint, addr).with_context(|| format!("serving {}", checkpoint.display()))
}

/// Runs the method comparison for every seed and writes `report.json`,
/// `report.md`, per-epoch logs and the manifest.
pub fn run(cfg: &ExperimentConfig, locator: &SourceLocator, seeds: &[u64], out: &Path) -> Result<RunReport> {
    let data = prepare_data(cfg)?;
    let source = resolve_source(cfg, locator, &data)?;
    let runs = run_seeds(cfg, &source.hypothesis, &data, seeds)?;
    let mut dir = RunDir::create(out)?;
    for run in &runs {
        for result in &run.results {
            if let Some(report) = &result.report {
                dir.write_jsonl(&format!("epochs/{}-seed{}.jsonl", result.method, run.seed), &report.epochs)?;
            }
        }
    }
    if let Some(training) = &source.training {
        dir.write_json("source_report.json", training)?;
    }
    let report = RunReport::new(runs);
    dir.write_json("report.json", &report)?;
    let table = report.to_table();
    dir.write("report.md", &table)?;
    let wall: f64 = report
        .runs
        .iter()
        .flat_map(|r| &r.results)
        .filter_map(|m| m.report.as_ref())
        .map(|r| r.wall_time_secs)
        .sum();
    dir.finish(
        "run",
        json!({
            "source": source.description,
            "seeds": seeds,
            "config": serde_json::to_value(cfg)?,
        }),
    )?;
    println!("{table}");
    eprintln!("training time {wall:.1}s, outputs in {}", out.display());
    Ok(report)
}

/// Runs the dkdHTL grid. Finished cells are appended to `grid.jsonl` as they
/// complete, so an interrupted grid keeps its partial results.
pub fn grid(cfg: &ExperimentConfig, locator: &SourceLocator, seeds: &[u64], out: &Path) -> Result<GridResult> {
    let data = prepare_data(cfg)?;
    let source = resolve_source(cfg, locator, &data)?;
    let mut dir = RunDir::create(out)?;
    let partial_path = dir.path("grid.jsonl")?;
    let partial = Mutex::new(File::create(&partial_path)?);
    let result = run_grid(cfg, &source.hypothesis, &data, seeds, |cell| {
        let line = serde_json::to_string(cell).expect("cells serialize");
        let mut f = partial.lock().expect("grid log lock");
        // a failed write here must not abort the grid; the final files are complete
        let _ = writeln!(f, "{line}").and_then(|_| f.flush());
    })?;
    drop(partial);
    // rewrite in grid order so the file is deterministic
    let mut f = OpenOptions::new().write(true).truncate(true).open(&partial_path)?;
    for cell in result.rows.iter().flat_map(|r| &r.cells) {
        writeln!(f, "{}", serde_json::to_string(cell)?)?;
    }
    dir.write_json("grid.json", &result)?;
    let table = grid_table(&result);
    dir.write("grid.md", &table)?;
    dir.finish(
        "grid",
        json!({
            "source": source.description,
            "seeds": seeds,
            "config": serde_json::to_value(cfg)?,
        }),
    )?;
    println!("{table}");
    Ok(result)
}
