//! Command-line frontend for the cavity simulator.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand as ClapSubcommand};

pub use config::{RunConfig, Subcommand};

/// Failure classes with distinct exit statuses.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or arguments, detected before any computation.
    Validation(String),
    /// Physics or I/O failure during a run.
    Runtime(String),
    /// `oracle-check` ran but the two routes disagree.
    CheckFailed(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
            Self::CheckFailed(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid input: {m}"),
            Self::Runtime(m) => write!(f, "run failed: {m}"),
            Self::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<qjump_core::Error> for Failure {
    fn from(e: qjump_core::Error) -> Self {
        use qjump_core::Error as E;
        match e {
            E::TruncationBreach { .. } | E::TruncationTooSmall { .. } | E::StepTooLarge { .. } => {
                Self::Runtime(e.to_string())
            }
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "qjump", version, about = "Quantum-jump simulation of a damped cavity with laser drive or photon-detection feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, ClapSubcommand)]
pub enum Command {
    /// Laser-driven cavity: Schrödinger-picture spiral and emission rate.
    LaserRun(CommonArgs),
    /// Feedback cavity: sample paths, magnitudes, ensemble and optional sweeps.
    FeedbackRun(CommonArgs),
    /// Probability of reaching the vacuum over a grid of initial amplitudes.
    ChiMap(CommonArgs),
    /// Trajectory ensemble against the truncated master equation.
    OracleCheck(CommonArgs),
    /// Time averages against the ensemble average.
    Ergodicity(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON file with RunConfig fields; missing fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` applied after the config file; dotted keys reach nested tables.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Full trajectory counts (10⁶ per ensemble, 10⁴ per χ cell).
    #[arg(long)]
    pub full_scale: bool,
}

impl Command {
    pub fn parts(&self) -> (Subcommand, &CommonArgs) {
        match self {
            Self::LaserRun(a) => (Subcommand::LaserRun, a),
            Self::FeedbackRun(a) => (Subcommand::FeedbackRun, a),
            Self::ChiMap(a) => (Subcommand::ChiMap, a),
            Self::OracleCheck(a) => (Subcommand::OracleCheck, a),
            Self::Ergodicity(a) => (Subcommand::Ergodicity, a),
        }
    }
}

/// Resolves the configuration and runs the command on the requested pool.
pub fn run(cli: &Cli) -> Result<(), Failure> {
    let (cmd, args) = cli.command.parts();
    let cfg = config::resolve(
        cmd,
        &config::Sources {
            config_file: args.config.as_deref(),
            full_scale: args.full_scale,
            overrides: &args.overrides,
            seed: args.seed,
            out: args.out.as_deref(),
        },
    )?;
    with_threads(args.threads, || commands::execute(cmd, &cfg))
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T, Failure> + Send) -> Result<T, Failure> {
    match threads {
        Some(0) => Err(Failure::Validation("--threads must be ≥ 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Runtime(format!("cannot start thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T, Failure>) -> Result<T, Failure> {
    match threads {
        Some(0) => Err(Failure::Validation("--threads must be ≥ 1".into())),
        _ => f(),
    }
}
