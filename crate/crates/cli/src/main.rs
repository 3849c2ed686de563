//! `drquery`: run branching analyses, build and audit reward tables, and
//! simulate the query protocol from JSON configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "drquery", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count, overriding the config.
    #[arg(long, global = true)]
    trials: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Per-level no-answer and first-answer probabilities, landmarks and checks.
    AnalyzeBranching,
    /// Build a reward table and write it as JSON.
    BuildScheme,
    /// Certify a reward table against single-agent sybil deviations.
    Audit,
    /// Monte Carlo estimate of cost and answer levels.
    Simulate,
    /// Exact expected cost across horizons.
    CostScaling,
}

pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<drquery::Error> for CliError {
    fn from(e: drquery::Error) -> Self {
        if e.is_input() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.into())
        }
    }
}

fn run(cli: &Cli) -> Result<Status, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let out: &Path = &cli.out;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("creating {}: {e}", out.display())))?;
    match cli.command {
        Command::AnalyzeBranching => commands::analyze_branching(&config::load(path)?, out),
        Command::BuildScheme => commands::build_scheme(&config::load(path)?, out),
        Command::Audit => {
            let mut cfg: config::AuditConfig = config::load(path)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            if let Some(trials) = cli.trials {
                cfg.trials = trials;
            }
            commands::audit(&cfg, out)
        }
        Command::Simulate => {
            let mut cfg: config::SimulateConfig = config::load(path)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            if let Some(trials) = cli.trials {
                cfg.trials = trials;
            }
            commands::simulate(&cfg, out)
        }
        Command::CostScaling => commands::cost_scaling(&config::load(path)?, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
