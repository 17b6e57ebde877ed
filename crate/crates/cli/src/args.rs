use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use shapval::{AggregationMode, ModelKind};

#[derive(Debug, Parser)]
#[command(name = "shapval", version, about = "Shapley-value valuation of training data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute per-tuple values of the training split and print them as JSON.
    Compute(ComputeArgs),
    /// Retrain on highest-K / lowest-K selections for every mode and model.
    Evaluate(EvaluateArgs),
    /// Emit per-tuple CSV (coordinates, support vectors, top/bottom flags) for plotting.
    ExportFigure(ExportArgs),
    /// Re-run the configuration recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row; the bundled Iris table when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = shapval::dataset::DEFAULT_LABEL_COLUMN)]
    pub label_col: String,
    /// Keep the first two species and the two sepal features.
    #[arg(long)]
    pub iris_2d: bool,
    #[arg(long, default_value_t = 20)]
    pub test_count: usize,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Z-score features with training-split statistics.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    /// Maximum number of sampled permutations.
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Early-stop threshold on the running means; 0 disables early stopping.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct TrainerArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub train_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the payload here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run manifest path (defaults to `<out>.manifest.json` when --out is set).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "svm")]
    pub model: ModelKind,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    #[arg(long, value_delimiter = ',', default_value = "ori,zero,abs")]
    pub modes: Vec<AggregationMode>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Enumerate all coalitions instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Largest training set accepted by --exact.
    #[arg(long, default_value_t = shapval::shapley::DEFAULT_EXACT_CAP)]
    pub exact_cap: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "logistic,svm")]
    pub models: Vec<ModelKind>,
    #[arg(long, default_value_t = 35)]
    pub k: usize,
    /// Selection size for the support-vector overlap counts.
    #[arg(long, default_value_t = 10)]
    pub overlap_k: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub sv_tol: f64,
    /// Splits to average over; defaults to --split-seed alone.
    #[arg(long, value_delimiter = ',')]
    pub split_seeds: Vec<u64>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Also write the text table to this file (it always goes to stderr).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Values JSON produced by `compute`.
    #[arg(long)]
    pub values: PathBuf,
    #[arg(long, default_value = "abs")]
    pub mode: AggregationMode,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Trainer settings for the support-vector model.
    #[command(flatten)]
    pub trainer: TrainerArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub sv_tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
