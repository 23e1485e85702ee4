//! `mfif`: runs particle and delayed simulations, sweeps and comparisons from
//! a flat TOML config and writes plot-ready artifacts.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Failure during a run or while writing artifacts: exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(field: &str, msg: impl std::fmt::Display) -> Self {
        CliError::Config(format!("`{field}`: {msg}"))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<mfif::Error> for CliError {
    fn from(e: mfif::Error) -> Self {
        use mfif::Error as E;
        match e {
            E::Config { .. } | E::Domain(_) | E::Parse { .. } => CliError::Config(e.to_string()),
            E::Runtime { .. } | E::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mfif", version, about = "Mean-field integrate-and-fire experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the N-particle system once per seed.
    SimulateParticles(Common),
    /// Run the delayed solver once per seed.
    SimulateDelayed(Common),
    /// Run a grid of N or delay values and report convergence.
    Sweep(Common),
    /// Compare firing curves read from CSV files.
    Compare(Common),
    /// Resolve a single cascade and print its rounds.
    CascadeCheck(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,
    /// Overrides the `seed` key; several seeds run side by side.
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "seed_override")]
    pub seeds: Option<Vec<u64>>,
    /// Single-seed form of `--seeds`.
    #[arg(long, value_name = "SEED")]
    pub seed_override: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, value_name = "K")]
    pub threads: Option<usize>,
    /// Print the effective config and derived sizes without running.
    #[arg(long)]
    pub dry_run: bool,
}

impl Common {
    pub fn seed_list(&self) -> Option<Vec<u64>> {
        self.seed_override.map(|s| vec![s]).or_else(|| self.seeds.clone())
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (mode, common) = match &cli.command {
        Command::SimulateParticles(c) => (run::Mode::Particles, c),
        Command::SimulateDelayed(c) => (run::Mode::Delayed, c),
        Command::Sweep(c) => (run::Mode::Sweep, c),
        Command::Compare(c) => (run::Mode::Compare, c),
        Command::CascadeCheck(c) => (run::Mode::CascadeCheck, c),
    };
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let file = config::FileConfig::load(&common.config)?;
    run::run_experiment(mode, &file, common)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfif: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
