use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use leafnet::data::SplitRatios;
use leafnet::layers::Padding;
use leafnet::optim::OptimizerKind;
use leafnet::Precision;

#[derive(Debug, Parser)]
#[command(
    name = "leafnet",
    version,
    about = "Train and run a from-scratch CNN leaf classifier"
)]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Shared {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory for every artifact.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a class-per-directory image tree and write manifest.json.
    Prepare(PrepareArgs),
    /// Train a model and write checkpoints plus epochs.csv.
    Train(TrainArgs),
    /// Score a checkpoint on one split; writes metrics.csv and confusion.csv.
    Evaluate(EvaluateArgs),
    /// Rank the classes for one or more images.
    Predict(PredictArgs),
    /// Plot train/validation accuracy of epoch logs to report.svg.
    Report(ReportArgs),
}

fn parse_ratios(s: &str) -> Result<SplitRatios, String> {
    s.parse().map_err(|e: leafnet::Error| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: leafnet::Error| e.to_string())
}

fn parse_padding(s: &str) -> Result<Padding, String> {
    s.parse().map_err(|e: leafnet::Error| e.to_string())
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        _ => Err(format!("unknown precision '{s}' (valid: f32, f64)")),
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Dataset root with one sub-directory per class.
    pub dataset_root: Option<PathBuf>,

    /// Train,val,test shares.
    #[arg(long, value_parser = parse_ratios, value_name = "T,V,T")]
    pub ratios: Option<SplitRatios>,

    /// Do not add the four augmented variants of each train image.
    #[arg(long)]
    pub no_augment: bool,

    /// Also write the augmented train variants as PNGs under OUT/augmented.
    #[arg(long)]
    pub export_augmented: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest to train on (default OUT/manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    #[arg(long, value_parser = parse_optimizer, value_name = "sgd-momentum|rmsprop|adam")]
    pub optimizer: Option<OptimizerKind>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long, value_parser = parse_padding, value_name = "valid|same")]
    pub padding: Option<Padding>,

    /// Keep the checkpoint with the best validation accuracy as best.lfnt
    /// (on unless set to false).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub track_best: Option<bool>,

    /// Square input size; anything but 256 needs a matching --conv-filters.
    #[arg(long)]
    pub image_size: Option<usize>,

    /// Filters per conv block, e.g. 32,64,64,64,64,64.
    #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
    pub conv_filters: Option<Vec<usize>>,

    #[arg(long, value_parser = parse_precision, value_name = "f32|f64")]
    pub precision: Option<Precision>,

    /// Continue from a checkpoint up to --epochs total epochs.
    #[arg(long, value_name = "CHECKPOINT")]
    pub resume: Option<PathBuf>,

    /// Record wall-clock seconds per epoch (makes epochs.csv run-dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,

    #[arg(long, default_value = "test")]
    pub split: leafnet::data::Split,

    /// Name written in the dataset column (default: manifest directory name).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Number of classes to list per image.
    #[arg(short = 'k', long = "top", default_value_t = 3)]
    pub top: usize,

    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Epoch logs written by `train`.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
}
