//! Command-line front end: reads study data, reports estimates and the four
//! prediction intervals, drives coverage simulations and evaluates the CDF
//! of Cochran's Q.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod analyze;
pub mod input;
pub mod qcdf;
pub mod simulate;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "CDPI_THREADS";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 2).
    Usage(String),
    /// Unreadable or invalid input data (exit 3).
    Data(String),
    /// A numerical routine failed (exit 4).
    Numerical(String),
    /// Writing output failed (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cdpi_core::Error> for CliError {
    fn from(e: cdpi_core::Error) -> Self {
        use cdpi_core::Error as E;
        match e {
            E::InvalidInput(_) | E::TooFewStudies { .. } | E::MethodUnavailable { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cdpi", version, about = "Prediction intervals for random-effects meta-analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyse one data set and report estimates and prediction intervals
    Analyze(AnalyzeArgs),
    /// Estimate interval coverage on simulated data
    Simulate(SimulateArgs),
    /// CDF of a weighted sum of chi-square(1) variables, or of Cochran's Q
    Qcdf(QcdfArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// study,y,se or study,y,v
    Effects,
    /// study,x1,n1,x0,n0
    Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputKind {
    Table,
    Json,
    ForestCsv,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// CSV file with a header row; `-` reads standard input
    pub input: PathBuf,

    /// Input layout; guessed from the header when omitted
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Bootstrap samples for the proposed interval
    #[arg(long = "B", default_value_t = cdpi_core::predint::DEFAULT_REPORT_BOOTSTRAP)]
    pub b: usize,

    /// Random seed; drawn at random and echoed when omitted
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, value_enum, default_value_t = OutputKind::Table)]
    pub out: OutputKind,

    /// Worker threads (0 = all cores); does not change results
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Design: i, ii or iii
    #[arg(long)]
    pub scenario: String,

    /// Variant of design ii: a, b or c
    #[arg(long)]
    pub variant: Option<String>,

    #[arg(long = "K")]
    pub k: usize,

    #[arg(long, allow_negative_numbers = true)]
    pub tau2: f64,

    /// Overall mean; 0 for designs i and iii, 1 for ii when omitted
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,

    #[arg(long, default_value_t = 1000)]
    pub reps: usize,

    #[arg(long = "B", default_value_t = cdpi_core::predint::DEFAULT_BOOTSTRAP)]
    pub b: usize,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long)]
    pub seed: Option<u64>,

    /// CSV file to append result rows to
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct QcdfArgs {
    /// Weights of the chi-square(1) terms, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true,
          conflicts_with_all = ["sigma2", "tau2"], required_unless_present = "sigma2")]
    pub lambdas: Option<Vec<f64>>,

    /// Within-study variances, comma separated; needs --tau2
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "tau2")]
    pub sigma2: Option<Vec<f64>>,

    #[arg(long, allow_negative_numbers = true, requires = "sigma2")]
    pub tau2: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    pub q: f64,

    /// Target bound on the truncation error
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => analyze::run(&a, out, err),
        Command::Simulate(a) => simulate::run(&a, out, err),
        Command::Qcdf(a) => qcdf::run(&a, out),
    }
}

/// Uses the given seed or draws one, noting the drawn value on `err`.
pub(crate) fn resolve_seed(seed: Option<u64>, err: &mut dyn Write) -> CliResult<u64> {
    match seed {
        Some(s) => Ok(s),
        None => {
            let s = rand::random::<u64>();
            writeln!(err, "note: no --seed given, using {s}")?;
            Ok(s)
        }
    }
}

pub(crate) fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

/// "95%" for alpha = 0.05, "97.5%" for 0.025.
pub(crate) fn level_label(alpha: f64) -> String {
    let lvl = 100.0 * (1.0 - alpha);
    if (lvl - lvl.round()).abs() < 1e-9 {
        format!("{lvl:.0}%")
    } else {
        format!("{}%", (lvl * 100.0).round() / 100.0)
    }
}
