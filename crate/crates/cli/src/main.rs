mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Constrained-budget Thompson sampling studies and portfolio backtests.
#[derive(Debug, Parser)]
#[command(name = "tsec", version)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for replicates (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replicated website-optimization study: regret.csv, armsets.csv, truths.
    Simulate,
    /// Repeat the study over a list of factor counts or budgets: summary.csv.
    Sweep,
    /// Portfolio backtest over price files: wealth.csv, rewards.csv.
    Backtest,
    /// Only draw and dump the simulated truths: arms.csv, truth/*.csv.
    TruthGen,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config::RunConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let ctx = commands::Context {
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
    };
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &ctx),
        Command::Sweep => commands::sweep(&cfg, &ctx),
        Command::Backtest => commands::backtest(&cfg, &ctx),
        Command::TruthGen => commands::truth_gen(&cfg, &ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(commands::Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
