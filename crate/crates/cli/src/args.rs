use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "firenet",
    version,
    about = "Train, tune and inspect SqueezeNet-style CT classifiers"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Plain-text `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for decoding and GEMM (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Force single-threaded numerics.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-class dataset and its manifest.
    Synth(SynthArgs),
    /// Train one experiment and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Bayesian search over learning rate, momentum and L2.
    Hpo(HpoArgs),
    /// Metrics of a checkpoint on one manifest split.
    Eval(EvalArgs),
    /// Classify individual images.
    Predict(PredictArgs),
    /// Write class activation map overlays.
    Cam(CamArgs),
    /// Time single-image inference.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Images per class.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainingFlags {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// exp1 | exp2 | exp3 | exp4
    #[arg(long)]
    pub experiment: Option<String>,
    /// Transfer weight archive (exp1, exp3).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Square input extent.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: TrainingFlags,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub momentum: Option<f32>,
    #[arg(long)]
    pub l2: Option<f32>,
}

#[derive(Debug, Args)]
pub struct HpoArgs {
    #[command(flatten)]
    pub common: TrainingFlags,
    /// Number of trials.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Continue the history in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// train | validation | test1 | test2
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CamArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Class index to explain instead of the predicted one.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Image to time; a blank input is used when omitted.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Sensitivity in percent, for the efficiency ratio.
    #[arg(long)]
    pub sensitivity: Option<f64>,
}
