//! `wtree`: reproducible experiments on weighted preferential attachment trees.
//!
//! Exit codes: 0 success or all checks pass, 1 computational failure or a
//! failed check, 2 usage or input error.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(
    name = "wtree",
    version,
    about = "Degree distributions of weighted preferential attachment trees"
)]
struct Cli {
    /// JSON file with default values for any flag (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for independent seeds and paths.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for lambda* and the limiting fractions c_k.
    Solve(SolveArgs),
    /// Grow trees and write histograms, edge lists and birth times.
    Simulate(SimulateArgs),
    /// Compare simulated histograms with a solved theory file.
    Compare(CompareArgs),
    /// Exact E[N_k] for small trees by enumerating all histories.
    Oracle(OracleArgs),
    /// Monte-Carlo checks on the root's birth process.
    Xproc(XprocArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Weight function: linear:a,b | power:alpha,beta | table:path[:lintail,a,b|powtail,alpha,beta]
    pub weights: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest k for which c_k is reported.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Cap on the number of series terms.
    #[arg(long)]
    pub max_terms: Option<usize>,
    /// Theory JSON path; the c_k CSV and manifest go next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Discrete,
    Continuous,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub weights: Option<String>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Base seed (default: $WTREE_SEED, else 0); run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// final | pow2 | comma-separated node counts
    #[arg(long)]
    pub snapshots: Option<String>,
    /// Number of independent runs.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the edge list.
    #[arg(long)]
    pub no_edges: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Glob matching histogram CSV files, one per run.
    #[arg(long)]
    pub sim: Option<String>,
    #[arg(long)]
    pub theory: Option<PathBuf>,
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Absolute tolerance on N_k/N_0 - c_k.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub z_cap: Option<f64>,
    /// Report JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub weights: Option<String>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Also run this many simulations and z-score them against the exact values.
    #[arg(long)]
    pub mc_runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub z_cap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum XprocCheck {
    /// E f_r(X_t) = e^{rt} on a time grid.
    Martingale,
    /// E exp(-lambda tau_k) = prod_{j<k} w(j)/(lambda+w(j)).
    Tau,
}

#[derive(Debug, Args)]
pub struct XprocArgs {
    pub weights: String,
    #[arg(value_enum)]
    pub check: XprocCheck,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Number of grid intervals on [0, tmax].
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub z_cap: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
    CheckFailed(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) | Failure::CheckFailed(_) => 1,
        }
    }
}

impl From<wtree::Error> for Failure {
    fn from(e: wtree::Error) -> Self {
        use wtree::Error::*;
        match e {
            Parse { .. }
            | InvalidForm(_)
            | InvalidSpec { .. }
            | InvalidInput(_)
            | Io(_)
            | Csv(_)
            | Json(_) => Failure::Usage(e.into()),
            Domain { .. } | NoSolution(_) | Inconsistent(_) | Capacity { .. } => {
                Failure::Compute(e.into())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Compute(e) => eprintln!("failed: {e:#}"),
                Failure::CheckFailed(msg) => eprintln!("check failed: {msg}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(Failure::Usage)?,
        None => ConfigFile::default(),
    };
    let jobs = config.pick_opt(cli.jobs, "jobs").map_err(Failure::Usage)?;
    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::Compute(e.into()))?;
    }
    match cli.command {
        Command::Solve(a) => commands::solve(a, &config),
        Command::Simulate(a) => commands::simulate(a, &config),
        Command::Compare(a) => commands::compare(a, &config),
        Command::Oracle(a) => commands::oracle(a, &config),
        Command::Xproc(a) => commands::xproc(a, &config),
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
