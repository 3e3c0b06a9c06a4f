//! `qpchain` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O or other runtime failure, 2 invalid flags,
//! 3 solver errors, 4 a result outside its acceptance thresholds.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qpchain::{ModelKind, Precision, SolverMethod, SolverOptions};

#[derive(Parser)]
#[command(
    name = "qpchain",
    version,
    about = "Steady-state transport in boundary-driven quasiperiodic chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the on-site potential V_i of a chain as CSV.
    Potential(PotentialArgs),
    /// Solve one steady state and print a JSON summary.
    Solve(SolveArgs),
    /// Run a parameter sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Fit scaling exponents to a sweep CSV.
    Fit(FitArgs),
    /// Compare the covariance solver against the exact many-body steady state.
    OracleCheck(OracleArgs),
    /// Run the sweeps and fits behind one figure and write a data bundle.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Potential family: clean, aah or fibonacci.
    #[arg(long, default_value = "clean")]
    kind: ModelKind,
    /// Number of sites.
    #[arg(long = "L")]
    length: usize,
    /// Potential strength.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// AAH phase; rejected for other families. Defaults to 0.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args, Clone)]
struct DriveArgs {
    /// Bath coupling.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Target occupation of the first site.
    #[arg(long, default_value_t = 1.0)]
    f1: f64,
    /// Target occupation of the last site.
    #[arg(long = "fL", default_value_t = 0.0)]
    f_l: f64,
    /// Bulk dephasing rate.
    #[arg(long = "Gamma", default_value_t = 0.0)]
    dephasing: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    LyapunovEigen,
    SparseVectorized,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Double,
    Fallback,
    Extended,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Arithmetic for the zero-dephasing route.
    #[arg(long, value_enum, default_value = "fallback")]
    precision: PrecisionArg,
    /// Residual tolerance, relative to max(gamma, 1).
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            method: match self.method {
                MethodArg::Auto => SolverMethod::Auto,
                MethodArg::LyapunovEigen => SolverMethod::LyapunovEigen,
                MethodArg::SparseVectorized => SolverMethod::SparseVectorized,
            },
            precision: match self.precision {
                PrecisionArg::Double => Precision::Double,
                PrecisionArg::Fallback => Precision::Fallback,
                PrecisionArg::Extended => Precision::Extended,
            },
            residual_tolerance: self.tolerance,
            ..SolverOptions::default()
        }
    }
}

#[derive(Args)]
struct PotentialArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Cross-check the Fibonacci closed form against the word recursion.
    #[arg(long)]
    check_word: bool,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    drive: DriveArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for summary.json and density.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the full covariance matrix (needs --out).
    #[arg(long, requires = "out")]
    dump_covariance: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Residual tolerance; overrides the config.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Ignore and overwrite the journal of a previous run.
    #[arg(long)]
    no_cache: bool,
    /// Log each completed point to standard error.
    #[arg(long)]
    progress: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Abscissa {
    /// J against L: transport exponent ν and exponential decay.
    #[value(name = "L")]
    Length,
    /// κ against Γ: small-Γ exponent β.
    #[value(name = "Gamma")]
    Dephasing,
}

#[derive(Args)]
struct FitArgs {
    /// Sweep CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "L")]
    against: Abscissa,
    /// Keep only rows with this λ (required if the file holds several).
    #[arg(long)]
    lambda: Option<f64>,
    /// Keep only rows with this Γ.
    #[arg(long = "Gamma")]
    dephasing: Option<f64>,
    /// Keep only rows with this L.
    #[arg(long = "L")]
    length: Option<usize>,
    /// Fit window: `all`, `last:N` or `range:MIN:MAX`.
    #[arg(long)]
    window: Option<String>,
    /// Exit with code 4 unless the exponent is at least this.
    #[arg(long)]
    expect_min: Option<f64>,
    /// Exit with code 4 unless the exponent is at most this.
    #[arg(long)]
    expect_max: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    /// Run the built-in grid of small chains instead of a single case.
    #[arg(long, conflicts_with_all = ["length", "theta"])]
    grid: bool,
    #[arg(long, default_value = "clean")]
    kind: ModelKind,
    #[arg(long = "L", required_unless_present = "grid")]
    length: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    drive: DriveArgs,
    /// Largest accepted deviation in C and in the currents.
    #[arg(long, default_value_t = 1e-8)]
    max_diff: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum Scale {
    Desk,
    Full,
}

#[derive(Args)]
struct ReproduceArgs {
    figure: Figure,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    /// Bundle directory; defaults to `<figure>-<scale>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Residual tolerance for every sweep in the bundle.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Bundle configuration (as written to bundle.json) replacing the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    progress: bool,
}

/// Failure categories, each with its own exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
    Threshold(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Threshold(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "invalid arguments: {m}"),
            Failure::Solver(m) => write!(f, "solver error: {m}"),
            Failure::Threshold(m) => write!(f, "threshold not met: {m}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Runtime(e.into())
            }
        }
    )*};
}
runtime_from!(
    anyhow::Error,
    std::io::Error,
    serde_json::Error,
    csv::Error,
    qpchain::SweepError
);

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Potential(a) => commands::potential(a),
        Command::Solve(a) => commands::solve(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Fit(a) => commands::fit(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
        Command::Reproduce(a) => reproduce::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qpchain: {f}");
            ExitCode::from(f.code())
        }
    }
}
