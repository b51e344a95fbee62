//! `covashift` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod model_file;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covashift::experiment::{MethodKind, Task};
use covashift::loss::LossKind;
use covashift::selection::Strategy;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] covashift::Error),

    #[error("model file: {0}")]
    Model(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(covashift::Error::Config { .. }) => 2,
            _ => 1,
        }
    }
}

fn parse_from<T>(s: &str) -> Result<T, covashift::Error>
where
    T: std::str::FromStr<Err = covashift::Error>,
{
    s.parse()
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "covashift",
    version,
    about = "Covariate shift adaptation experiments"
)]
struct Cli {
    /// Worker threads.
    #[arg(long, global = true, env = "COVASHIFT_JOBS", value_parser = positive)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the 1-D sinc toy problem as a dataset bundle.
    GenToy(GenToyArgs),
    /// Split a labeled pool into shifted train and test sides.
    ShiftSplit(ShiftSplitArgs),
    /// Fit a (relative) density ratio on a bundle.
    FitRatio(FitRatioArgs),
    /// Tune and train one method on a bundle.
    Train(TrainArgs),
    /// Score a trained model on a bundle's eval block.
    Evaluate(EvaluateArgs),
    /// Run trials x methods from a config file.
    Experiment(ExperimentArgs),
    /// Monte-Carlo check that half the squared test risk stays below the bound.
    BoundCheck(BoundCheckArgs),
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 150, value_parser = positive)]
    pub n_tr: usize,
    #[arg(long, default_value_t = 150, value_parser = positive)]
    pub n_te: usize,
    #[arg(long, default_value_t = 10000, value_parser = positive)]
    pub n_eval: usize,
}

#[derive(Debug, Args)]
pub struct ShiftSplitArgs {
    /// Labeled pool CSV with a header row.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "y")]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50, value_parser = positive)]
    pub candidates: usize,
    /// Sharpness of the train-membership probability along the direction.
    #[arg(long, default_value_t = 16.0)]
    pub scale: f64,
    /// Keep raw feature scales instead of standardizing the pool.
    #[arg(long)]
    pub no_zscore: bool,
    /// Split on a column's values instead of a random direction.
    #[arg(long, requires = "train_values", conflicts_with_all = ["direction", "assign_seed"])]
    pub by_column: Option<String>,
    #[arg(long, value_delimiter = ',', requires = "by_column")]
    pub train_values: Vec<f64>,
    /// Replay a recorded direction instead of searching.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "assign_seed"
    )]
    pub direction: Vec<f64>,
    #[arg(long, requires = "direction")]
    pub assign_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitRatioArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// 0 gives the plain importance; larger values the relative ratio.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Ridge strength; chosen by CV when omitted.
    #[arg(long)]
    pub lambda_g: Option<f64>,
    #[arg(long, default_value_t = 50, value_parser = positive)]
    pub basis: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the fitted ratio at each training row.
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_from::<MethodKind>)]
    pub method: MethodKind,
    #[arg(long, default_value = "regression", value_parser = parse_from::<Task>)]
    pub task: Task,
    /// Training surrogate; defaults to squared (regression) or hinge (binary).
    #[arg(long, value_parser = parse_from::<LossKind>)]
    pub loss: Option<LossKind>,
    #[arg(long, default_value = "median", value_parser = parse_from::<Strategy>)]
    pub tuning: Strategy,
    #[arg(long)]
    pub lambda_f: Option<f64>,
    #[arg(long)]
    pub lambda_g: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 50, value_parser = positive)]
    pub basis: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000, value_parser = positive)]
    pub n: usize,
    #[arg(long, default_value_t = 20, value_parser = positive)]
    pub pairs: usize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = cli.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    // Only fails if a global pool already exists, which is harmless.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global();
    match cli.command {
        Command::GenToy(a) => commands::gen_toy(&a),
        Command::ShiftSplit(a) => commands::shift_split(&a),
        Command::FitRatio(a) => commands::fit_ratio(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Experiment(a) => commands::experiment(&a, jobs),
        Command::BoundCheck(a) => commands::bound_check(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
