use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use tuberepair::detector::Variant;
use tuberepair::inference::InferenceMode;

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Repair disconnections in binary tubular trees.
#[derive(Debug, Parser)]
#[command(name = "tuberepair", version)]
pub struct Cli {
    /// Flat `key = value` file supplying defaults for the subcommand's flags.
    /// Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-volume work.
    #[arg(long, global = true, default_value_t = default_jobs())]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic tree volumes and their centerline graphs.
    Phantom(PhantomArgs),
    /// Extract the centerline graph of a volume.
    Skeletonize(SkeletonizeArgs),
    /// Carve breaks into source volumes and write a dataset.
    Synth(SynthArgs),
    /// Train a keypoint detector on a dataset.
    Train(TrainArgs),
    /// Detect break keypoints in a whole volume.
    Infer(InferArgs),
    /// Score a detector on the fixed crops of a dataset split.
    Eval(EvalArgs),
    /// Bridge detected breaks.
    Repair(RepairArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Cube edge (`96`) or `DxHxW`.
    #[arg(long, default_value = "96")]
    pub dims: String,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub depth: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SkeletonizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of `.btv` source volumes.
    #[arg(long)]
    pub volumes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub branches: usize,
    /// Train:val:test volume ratio.
    #[arg(long, default_value = "7:1:2")]
    pub split: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest, or the directory holding `manifest.json`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "two")]
    pub variant: Variant,
    #[arg(long, default_value_t = 32)]
    pub crop: usize,
    #[arg(long, default_value_t = 16)]
    pub base_width: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start from the weights of another checkpoint with the same architecture.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve JSON; defaults to `<out>.curve.json`.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value = "pooled")]
    pub mode: InferenceMode,
    /// Crops per candidate component.
    #[arg(short = 'T', default_value_t = 3)]
    pub crops: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub crop: usize,
    /// Components below this many voxels are ignored.
    #[arg(long, default_value_t = 5)]
    pub noise_min: usize,
    /// Feed the unseparated crop to every input channel.
    #[arg(long)]
    pub raw_input: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("model").required(true).args(["ckpt", "oracle"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Score the ground-truth heatmaps instead of a trained model.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 32)]
    pub crop: usize,
    /// Row label in the CSV output.
    #[arg(long)]
    pub name: Option<String>,
    /// Report path; a `.csv` extension writes the CSV row instead of JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Additional CSV output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Result JSON written by `infer`.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Bridge radius for every pair; by default the distance to background at KP1.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Repair log JSON; defaults to `<out>.log.json`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}
