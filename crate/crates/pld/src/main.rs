use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pld::commands::{self, RunOptions};
use pld::config::ExperimentConfig;

/// Denoising implicit-feedback recommenders with personalized loss
/// distributions.
#[derive(Parser)]
#[command(name = "pld", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load or generate data, filter, split and inject noise.
    Prepare(Common),
    /// Train every grid point and seed; writes epoch logs and checkpoints.
    Train(Common),
    /// Per-interaction losses, overlap ratios and per-user quartile gaps.
    Analyze(WithCheckpoint),
    /// Sweep the theoretical expectation against Monte Carlo.
    Theory(Common),
    /// Recall@K and NDCG@K of a checkpoint on the test split.
    Eval(WithCheckpoint),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed to run; repeat for several. Overrides the config.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output root. Overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithCheckpoint {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to load instead of each run's own `checkpoint.txt`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn load(c: &Common, checkpoint: Option<PathBuf>) -> Result<(ExperimentConfig, RunOptions)> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let opts = RunOptions {
        seeds: c.seeds.clone(),
        out: c.out.clone(),
        checkpoint,
    };
    Ok((cfg, opts))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(c) => {
            let (cfg, opts) = load(&c, None)?;
            for s in commands::cmd_prepare(&cfg, &opts)? {
                println!("{}", serde_json::to_string(&s)?);
            }
        }
        Command::Train(c) => {
            let (cfg, opts) = load(&c, None)?;
            for s in commands::cmd_train(&cfg, &opts)? {
                println!("{}", serde_json::to_string(&s)?);
            }
        }
        Command::Analyze(c) => {
            let (cfg, opts) = load(&c.common, c.checkpoint)?;
            for s in commands::cmd_analyze(&cfg, &opts)? {
                println!("{}", serde_json::to_string(&s)?);
            }
        }
        Command::Theory(c) => {
            let (cfg, opts) = load(&c, None)?;
            for r in commands::cmd_theory(&cfg, &opts)? {
                println!("{}", serde_json::to_string(&r)?);
            }
        }
        Command::Eval(c) => {
            let (cfg, opts) = load(&c.common, c.checkpoint)?;
            for r in commands::cmd_eval(&cfg, &opts)? {
                println!("{}", serde_json::to_string(&r)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
