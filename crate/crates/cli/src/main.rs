mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(
    name = "impactkit",
    version,
    about = "Market-impact simulation and portfolio experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file with per-command sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (overrides the file; defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Simulate orders and compare the moments of (I, J - I/2) with theory.
    ValidateEq10,
    /// Fit impact parameters under several sampling designs.
    FitCompare,
    /// Efficient frontiers under true and estimated impact parameters.
    Frontier,
    /// Optimal portfolios and the utility lost to estimation error.
    Portfolio,
    /// Information dominance of sampling designs over a parameter grid.
    DominanceGrid,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ValidateEq10 => "validate-eq10",
            Command::FitCompare => "fit-compare",
            Command::Frontier => "frontier",
            Command::Portfolio => "portfolio",
            Command::DominanceGrid => "dominance-grid",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(run::EXIT_CONFIG);
            }
        },
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    match run::execute(cli.command, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
