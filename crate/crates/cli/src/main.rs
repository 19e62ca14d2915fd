//! `cvae`: generate datasets, train models, classify, and export cluster
//! tables and latent traversals.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cvae", version, about = "Conceptual VAE toolkit")]
pub struct Cli {
    /// Seed for data generation, initialisation and training noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Record the run as deterministic. Every command is single-threaded
    /// and seeded, so repeated runs are byte-identical either way.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Preset sizes for data, network and schedule.
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    pub profile: ProfileArg,
    /// Output directory for this command's artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Main,
    Rainbow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Conceptual,
    Vanilla,
    Any,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a dataset (train/dev/test splits) to disk.
    Generate(GenerateArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Per-domain accuracy of the KL classifier.
    Classify(ClassifyArgs),
    /// Export encoder means and log-variances per instance and dimension.
    Clusters(ClustersArgs),
    /// Decode a sweep along one latent dimension into an image strip.
    Traverse(TraverseArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// TOML dataset config; unset keys take the variant's defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset variant; `rainbow` uses seven colour concepts.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// ANY slots per training label.
    #[arg(long)]
    pub any: Option<usize>,
    /// Number of training instances.
    #[arg(long)]
    pub train: Option<usize>,
    /// Number of dev instances.
    #[arg(long)]
    pub dev: Option<usize>,
    /// Number of test instances.
    #[arg(long)]
    pub test: Option<usize>,
    /// Image side length in pixels; a multiple of 16.
    #[arg(long)]
    pub image_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML file with optional `[arch]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Objective; defaults to `any` when the training labels contain ANY.
    #[arg(long, value_enum)]
    pub variant: Option<ObjectiveArg>,
    /// Overrides the profile's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from a `state.ckpt` written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Model checkpoint; optional with `--oracle`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Split to score; by default dev and test.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Replace the encoder by the attribute-reading reference encoder.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Args, Debug)]
pub struct ClustersArgs {
    /// Model checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Split to export.
    #[arg(long, value_enum, default_value_t = SplitArg::Dev)]
    pub split: SplitArg,
}

#[derive(Args, Debug)]
pub struct TraverseArgs {
    /// Model checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Input image (binary PPM). Alternatively use `--data` and `--index`.
    #[arg(long, conflicts_with_all = ["data", "index"])]
    pub image: Option<PathBuf>,
    /// Dataset directory to take the input image from.
    #[arg(long, requires = "index")]
    pub data: Option<PathBuf>,
    /// Split to take the input image from.
    #[arg(long, value_enum, default_value_t = SplitArg::Dev)]
    pub split: SplitArg,
    /// Instance index within the split.
    #[arg(long)]
    pub index: Option<usize>,
    /// Latent dimension to sweep; domains come first in vocabulary order.
    #[arg(long)]
    pub dim: usize,
    /// Number of decoded frames.
    #[arg(long, default_value_t = 7)]
    pub steps: usize,
    /// Half-width of the sweep; defaults to two prior standard deviations.
    #[arg(long)]
    pub range: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
