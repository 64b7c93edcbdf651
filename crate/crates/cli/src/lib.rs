//! Command-line front end for the denoising library.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
//! 3 a verified statement held less often than the configured threshold.

use std::ffi::OsString;
use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use refactor_core::experiment::ScanVariable;
use refactor_core::synth::{NoiseDistribution, SupportStyle};
use refactor_core::theory::Theorem;
use refactor_core::Variant;
use thiserror::Error;

mod commands;
pub mod config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] refactor_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Assertion(_) => EXIT_ASSERTION,
            CliError::Core(e) => match e {
                refactor_core::Error::NumericalFailure(_) | refactor_core::Error::Separation { .. } => {
                    EXIT_NUMERICAL
                }
                _ => EXIT_USAGE,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "refactor", version, about = "Denoising of low-rank, column-sparse matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo MSE scan over t, x or n, written as a plot table.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Denoise a single matrix file.
    #[command(args_override_self = true)]
    Denoise(DenoiseArgs),
    /// Empirical event frequency of a theorem or lemma conclusion.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Confounder deflation and association testing on a synthetic study.
    #[command(args_override_self = true)]
    Assoc(AssocArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=1024))]
    pub threads: Option<u64>,
    /// Output file (standard output when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file with defaults for any of this command's flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Comma-separated list argument.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|v| {
                if v.is_empty() {
                    Err("empty list".to_string())
                } else {
                    Ok(List(v))
                }
            })
    }
}

/// One `n:t:x` cell of a relative-improvement grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell(pub usize, pub usize, pub f64);

impl FromStr for GridCell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected n:t:x, got {s:?}"));
        }
        let n = parts[0].parse().map_err(|e| format!("n in {s:?}: {e}"))?;
        let t = parts[1].parse().map_err(|e| format!("t in {s:?}: {e}"))?;
        let x = parts[2].parse().map_err(|e| format!("x in {s:?}: {e}"))?;
        Ok(GridCell(n, t, x))
    }
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Noise level sigma.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// gaussian, or Student-t as t6 / student-t:6.
    #[arg(long)]
    pub noise: Option<NoiseDistribution>,
    /// Leave Student-t draws at their natural variance.
    #[arg(long)]
    pub raw_noise: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scanned parameter: t, x or n.
    #[arg(long)]
    pub scan: Option<ScanVariable>,
    /// Strictly increasing scan values, comma separated.
    #[arg(long)]
    pub values: Option<List<f64>>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub x: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Right-vector construction: gaussian or flat.
    #[arg(long)]
    pub support: Option<SupportStyle>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated estimators (tsvd, refactor, refactor-plus,
    /// refactor-star, jl, jl-star).
    #[arg(long)]
    pub estimators: Option<List<Variant>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StarArg {
    Inner,
    Correlation,
}

#[derive(Debug, Clone, Args)]
pub struct DenoiseArgs {
    /// Matrix file: one row per line, whitespace or comma delimited.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub r: Option<usize>,
    /// Number of retained columns (selecting variants only).
    #[arg(long)]
    pub t: Option<usize>,
    /// First-pass statistic used by refactor-star.
    #[arg(long, value_enum)]
    pub star_statistic: Option<StarArg>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// T1, T2, T3, L_inactive, L_active, L_cosine or L_sinval.
    #[arg(long)]
    pub theorem: Option<Theorem>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub t: Option<usize>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub support: Option<SupportStyle>,
    /// Number of independent replicates.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Constant in the active-entry bound b_j^2 > c ln n / n.
    #[arg(long)]
    pub c: Option<f64>,
    /// Constant in the sparsity bound t <= c0 n / ln n.
    #[arg(long)]
    pub c0: Option<f64>,
    /// Multiplier in the detection threshold s^2 alpha^2 ln n / n.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Slack in the relative-improvement bound.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Also enforce the constant-dependent hypotheses.
    #[arg(long)]
    pub strict: bool,
    /// refactor or refactor-plus.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Required success frequency for asserted statements.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Relative-improvement grid as n:t:x cells, comma separated.
    #[arg(long)]
    pub grid: Option<List<GridCell>>,
    /// Where to write the grid table (standard output when omitted).
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AssocArgs {
    /// Start from the dense strong-confounder scenario.
    #[arg(long)]
    pub dense: bool,
    /// Make the phenotype independent of the confounder.
    #[arg(long)]
    pub null: bool,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub sites: Option<usize>,
    /// Number of sites loading on the confounder.
    #[arg(long)]
    pub active: Option<usize>,
    /// Confounder strength.
    #[arg(long)]
    pub x: Option<f64>,
    /// Log-odds slope of the phenotype on the confounder loading.
    #[arg(long)]
    pub link: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn run(args: Vec<OsString>) -> i32 {
    let root = Cli::command();
    let args = if args.len() >= 2 {
        match config::expand_args(&root, args) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("error: {e}");
                return e.exit_code();
            }
        }
    } else {
        args
    };
    let cli = match root
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
