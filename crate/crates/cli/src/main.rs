//! `mcre`: config-driven experiments for Markov chains in random
//! environments. Exit codes: 0 success, 2 configuration error, 3 runtime
//! error (with the failing module named).

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime { module: String, message: String },
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime { module, message } => {
                write!(f, "runtime error in module `{module}`: {message}")
            }
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mcre", version, about = "Markov chains in random environments: simulation and checks")]
struct Args {
    /// Path to the TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bound worker parallelism; outputs are independent of this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward path of the chain and its environment (CSV: t, y, x).
    Simulate,
    /// Coalescence curve of the coupled chain (CSV + decay-fit JSON).
    Couple,
    /// Backward total-variation distances vs depth (CSV: n, tv, se).
    Backward,
    /// Drift, geometric-mean and minorization condition reports (JSON).
    Check,
    /// Good-time sequence and density (CSV of tau + JSON summary).
    Goodtimes,
    /// Lyapunov exponent estimate of the model's matrix map (JSON).
    Lyapunov,
    /// Running averages along one stationary path (CSV: t, average).
    Lln,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}

fn run(args: Args) -> Result<(), CliError> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config_path = args
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let out = args.out.ok_or_else(|| CliError::Config("--out DIR is required".into()))?;
    let text = std::fs::read_to_string(&config_path).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let mut cfg = config::parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&out)?;
    match args.command {
        Command::Simulate => run::simulate(&cfg, &out),
        Command::Couple => run::couple(&cfg, &out),
        Command::Backward => run::backward(&cfg, &out),
        Command::Check => run::check(&cfg, &out),
        Command::Goodtimes => run::goodtimes(&cfg, &out),
        Command::Lyapunov => run::lyapunov(&cfg, &out),
        Command::Lln => run::lln(&cfg, &out),
    }
}
