use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use dkdhtl_cli::{commands, exit_code, ConfigError, ExperimentConfig, SourceLocator};

const OUT_ENV: &str = "DKDHTL_OUT";
const DEFAULT_OUT: &str = "dkdhtl-runs";

#[derive(Parser)]
#[command(name = "dkdhtl", version, about = "Hypothesis transfer learning with dynamic knowledge distillation")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for seeds and grid cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory. Defaults to the config's `out`, then $DKDHTL_OUT,
    /// then ./dkdhtl-runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Source hypothesis: inproc, file:PATH or tcp:HOST:PORT.
    #[arg(long, global = true)]
    source: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the source and target domain splits as CSV.
    GenData,
    /// Train the source model and save source.ckpt.
    TrainSource,
    /// Serve a source checkpoint over TCP.
    Serve {
        /// Checkpoint to serve. Defaults to source.checkpoint from the config.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
    /// Compare SH, TD, skdHTL and dkdHTL.
    Run,
    /// dkdHTL over the lambda, delta and temperature grid.
    Grid,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError("--config is required for this command".into()))?;
    Ok(ExperimentConfig::load(path)?)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn locator(cli: &Cli, cfg: &ExperimentConfig) -> Result<SourceLocator> {
    let text = cli
        .source
        .as_deref()
        .or(cfg.source.locator.as_deref())
        .unwrap_or("inproc");
    Ok(SourceLocator::parse(text)?)
}

fn seeds(cli: &Cli, cfg: &ExperimentConfig) -> Vec<u64> {
    cli.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(ConfigError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Serve { checkpoint, addr } => {
            let checkpoint = match checkpoint {
                Some(p) => p.clone(),
                None => load_config(cli)?
                    .source
                    .checkpoint
                    .ok_or_else(|| ConfigError("serve needs --checkpoint or source.checkpoint".into()))?,
            };
            commands::serve_cmd(&checkpoint, addr)
        }
        Command::GenData => {
            let cfg = load_config(cli)?;
            commands::gen_data(&cfg, &out_dir(cli, Some(&cfg)))
        }
        Command::TrainSource => {
            let cfg = load_config(cli)?;
            commands::train_source_cmd(&cfg, &out_dir(cli, Some(&cfg))).map(|_| ())
        }
        Command::Run => {
            let cfg = load_config(cli)?;
            let loc = locator(cli, &cfg)?;
            commands::run(&cfg, &loc, &seeds(cli, &cfg), &out_dir(cli, Some(&cfg))).map(|_| ())
        }
        Command::Grid => {
            let cfg = load_config(cli)?;
            let loc = locator(cli, &cfg)?;
            commands::grid(&cfg, &loc, &seeds(cli, &cfg), &out_dir(cli, Some(&cfg))).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
