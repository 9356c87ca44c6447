//! Argument surface. Every subcommand resolves to a plain struct of owned
//! values; execution lives in `commands`.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "fabtwin",
    version,
    about = "Variation-aware digital twin for nanoscale fabrication",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Produce layout datasets (random patterns or canonical structures)
    #[command(subcommand, name = "gen-data")]
    GenData(GenDataCmd),
    /// Stochastic process simulation
    #[command(subcommand)]
    Fab(FabCmd),
    /// Fit a model to a dataset
    #[command(subcommand)]
    Train(TrainCmd),
    /// Sample outputs from a trained model checkpoint
    Generate(GenerateArgs),
    /// Score a set of generated images against reference outcomes
    Evaluate(EvaluateArgs),
    /// Decompose predictive variance across several checkpoints
    Uncertainty(UncertaintyArgs),
    /// Render charts and maps
    #[command(subcommand)]
    Plot(PlotCmd),
}

#[derive(Subcommand, Debug)]
pub enum GenDataCmd {
    /// Random band-limited layouts plus a dataset manifest
    Synth(SynthArgs),
    /// One canonical evaluation structure plus a dataset manifest
    Structures(StructuresArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// How many layouts to draw
    #[arg(long)]
    pub count: usize,
    /// Canvas side in pixels (overrides the spec file)
    #[arg(long)]
    pub size: Option<usize>,
    /// Synthesis spec JSON; defaults apply when omitted
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StructuresArgs {
    /// One of: cross25 cross50 cross100 square target50 target100
    #[arg(long)]
    pub kind: String,
    /// Canvas side in pixels
    #[arg(long, default_value_t = 256)]
    pub canvas: usize,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum FabCmd {
    /// Draw stochastic fabrication outcomes for one layout
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Layout PNG (binary mask)
    #[arg(long)]
    pub layout: PathBuf,
    /// Process parameter JSON; defaults apply when omitted
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// How many outcomes to draw
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; outcomes are appended to its manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum TrainCmd {
    /// Adversarial generator with latent noise injection
    Genfab(TrainArgs),
    /// Deterministic regression baseline
    Unet(TrainArgs),
    /// Dropout baseline kept stochastic at inference
    Mcdropout(TrainArgs),
    /// Independently seeded ensemble of deterministic baselines
    Ensemble(EnsembleArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest JSON
    #[arg(long)]
    pub data: PathBuf,
    /// Training config JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Ensemble size
    #[arg(long, default_value_t = 5)]
    pub members: usize,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Model checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Layout PNG (binary mask)
    #[arg(long)]
    pub layout: PathBuf,
    /// How many outputs to sample
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory of reference outcome PNGs (binary masks)
    #[arg(long)]
    pub real: PathBuf,
    /// Directory of generated PNGs (grayscale)
    #[arg(long)]
    pub generated: PathBuf,
    /// Histogram resolution for the distribution metrics
    #[arg(long, default_value_t = 256)]
    pub bins: usize,
    /// Comma-separated subset of: iou,kl,wd,fd
    #[arg(long, default_value = "iou,kl,wd,fd")]
    pub metrics: String,
    /// Report JSON path to write
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct UncertaintyArgs {
    /// Two or more model checkpoints
    #[arg(long, num_args = 1.., required = true)]
    pub ckpts: Vec<PathBuf>,
    /// Layout PNG (binary mask)
    #[arg(long)]
    pub layout: PathBuf,
    /// Samples per checkpoint
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum PlotCmd {
    /// Render a training log as a pair of loss charts
    Losses(LossesArgs),
    /// Render a scalar map through a fixed color ramp
    Heatmap(HeatmapArgs),
}

#[derive(Args, Debug)]
pub struct LossesArgs {
    /// Training loss CSV
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Chart PNG; a second *.components.png chart lands beside it
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    /// Scalar map PNG (grayscale)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Rendered PNG
    #[arg(long)]
    pub out: PathBuf,
    /// "auto" or a positive number pinning the top of the ramp
    #[arg(long, default_value = "auto")]
    pub scale: String,
}
