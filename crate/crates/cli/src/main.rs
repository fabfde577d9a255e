//! `l0cert` command-line interface.
//!
//! Exit codes: `0` success, `2` invalid flags or parameters, `3` I/O or parse
//! failure on input/output files, `4` solver failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "l0cert", version, about = "Certifiably optimal sparse GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic data set.
    Gen(GenArgs),
    /// Solve the root perspective relaxation.
    Relax(RelaxArgs),
    /// Run branch-and-bound to a certified optimum.
    Certify(CertifyArgs),
    /// Time the regularizer kernels; prints CSV.
    BenchKernels(BenchArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Task {
    Squared,
    Logistic,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Pgd,
    Fista,
    FistaLinesearch,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum RestartArg {
    Gap,
    Function,
    None,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = Task::Squared)]
    task: Task,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k_true: usize,
    /// AR(1) correlation, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 5.0)]
    snr: f64,
    /// Magnitude of the planted coefficients.
    #[arg(long, default_value_t = 1.0)]
    coef: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Directory with X.csv, y.csv and meta.json.
    #[arg(long)]
    data: PathBuf,
    /// Cardinality bound; falls back to meta.json.
    #[arg(long)]
    k: Option<usize>,
    /// Box bound M; falls back to meta.json.
    #[arg(long)]
    m: Option<f64>,
    /// Ridge weight; falls back to meta.json.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Absolute duality-gap tolerance of the relaxation solver.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Fista)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = RestartArg::Gap)]
    restart: RestartArg,
    /// Gap contraction factor for the gap restart.
    #[arg(long, default_value_t = 3f64.exp())]
    eta: f64,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
}

#[derive(Args, Debug)]
struct RelaxArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Relative optimality gap at which the search stops.
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    node_limit: usize,
    #[arg(long, default_value_t = 5)]
    beam_width: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    p_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<l0cert::Error> for Failure {
    fn from(err: l0cert::Error) -> Self {
        use l0cert::Error as E;
        let code = match err {
            E::InvalidInstance(_)
            | E::InvalidSpec(_)
            | E::InvalidConfig(_)
            | E::EmptyProblem
            | E::DimensionMismatch { .. } => 2,
            E::Io { .. } | E::Parse(_) => 3,
            E::IndexNotFree { .. }
            | E::ConvergenceFailure { .. }
            | E::NonFiniteIterate { .. }
            | E::NoBranchCandidate
            | E::InstanceTooLarge { .. } => 4,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let result = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Relax(args) => commands::relax(args),
        Command::Certify(args) => commands::certify(args),
        Command::BenchKernels(args) => commands::bench_kernels(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
