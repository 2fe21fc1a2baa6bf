//! `exch`: train, evaluate and inspect exchangeable matrix models.
//!
//! Exit codes: 0 success, 1 check or metric failure, 2 usage, config or data error.

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "exch", version, about = "Exchangeable matrix models: training, evaluation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus per-epoch report.
    Train(TrainArgs),
    /// RMSE of a checkpoint on held-out ratings.
    Evaluate(EvalArgs),
    /// `evaluate --mode extrapolate`: a matrix with its own id space.
    Extrapolate(EvalArgs),
    /// Write row and column factors of a matrix (FEA checkpoints only).
    Factorize(FactorizeArgs),
    /// Brute-force checks of the weight-tying theory for one shape.
    Verify(VerifyArgs),
    /// Empirical inclusion frequencies of a minibatch sampler.
    SampleCheck(SampleArgs),
}

#[derive(Args, Clone, Default)]
pub struct DataArgs {
    /// Ratings file, or a MovieLens directory holding u1.base/u1.test etc.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// movielens (tab separated), csv or tsv; guessed from the path when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// uN / ua / ub (file pair in a directory), random:F (hold out fraction F) or none.
    #[arg(long)]
    pub split: Option<String>,
    /// Rating scale, e.g. 1-5, 0.5-5/0.5 or 1,2,4.
    #[arg(long)]
    pub scale: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Arch {
    Fea,
    #[value(alias = "ss")]
    SelfSupervised,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Maximum cells per minibatch.
    #[arg(long)]
    pub budget: Option<usize>,
    /// uniform or conditional.
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs without validation improvement before stopping (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Hold out this fraction of the training ratings for validation; by
    /// default the test split (if any) is monitored.
    #[arg(long, default_value_t = 0.0)]
    pub val_fraction: f64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum EvalMode {
    Interpolate,
    Extrapolate,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Decode {
    Expectation,
    Argmax,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Cold {
    Reject,
    Impute,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<EvalMode>,
    /// Comma-separated fractions of the matrix shown as observed, e.g.
    /// 0.05,0.15,...; one record per value. Without it the data split is used.
    #[arg(long, value_delimiter = ',')]
    pub observed_fraction: Vec<f64>,
    /// Scale of the data when it differs from the checkpoint's.
    #[arg(long, requires = "rebin_to")]
    pub rebin_from: Option<String>,
    /// Target scale for rebinning; must equal the checkpoint's scale.
    #[arg(long, requires = "rebin_from")]
    pub rebin_to: Option<String>,
    #[arg(long, value_enum, default_value = "expectation")]
    pub decode: Decode,
    /// Rows/columns with no observed ratings (FEA); defaults to impute in
    /// extrapolate mode and to the checkpoint's policy otherwise.
    #[arg(long, value_enum)]
    pub cold: Option<Cold>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also append the metric records to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FactorizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory for row_factors.tsv and col_factors.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Axis sizes, e.g. 3,4 or 2,2,2.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    /// Random legal permutations to test.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the full report (every illegal permutation and witness) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "uniform")]
    pub sampler: String,
    #[arg(long)]
    pub budget: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Conditional sampler: rows per batch (default derived from the budget).
    #[arg(long)]
    pub target_rows: Option<usize>,
    /// Conditional sampler: columns per batch (default derived from the budget).
    #[arg(long)]
    pub target_cols: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-row (conditional) or per-cell (uniform) frequency table, TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl From<exchangeable::Error> for CliError {
    fn from(e: exchangeable::Error) -> Self {
        use exchangeable::Error as E;
        match e {
            E::NonFinite(_) | E::Sampling(_) | E::Graph { .. } => CliError::Failure(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a, a.mode.unwrap_or(EvalMode::Interpolate)),
        Command::Extrapolate(a) => commands::evaluate(&a, EvalMode::Extrapolate),
        Command::Factorize(a) => commands::factorize(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::SampleCheck(a) => commands::sample_check(&a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
