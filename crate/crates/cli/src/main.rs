//! `lact`: dataset generation, FBP, training, reconstruction, scoring and
//! ablation sweeps for limited-angle fan-beam CT.

mod commands;
mod common;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lact", version, about = "Limited-angle CT reconstruction toolkit")]
pub struct Cli {
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, env = "LACT_THREADS")]
    pub threads: Option<usize>,

    /// Print the fully resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    /// Log level for stderr progress messages.
    #[arg(long, global = true, default_value = "info")]
    pub log: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render phantoms and their sinograms into a dataset directory.
    Generate(GenerateArgs),
    /// Filtered back projection of one angular window.
    Fbp(FbpArgs),
    /// Train the reconstruction network.
    Train(TrainArgs),
    /// Reconstruct with a trained checkpoint.
    Reconstruct(ReconstructArgs),
    /// Score predicted images against ground truth per difficulty level.
    Eval(EvalArgs),
    /// Run an ablation sweep and write its CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Dataset manifest JSON used as the base configuration.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Image side length; resets parameter ranges and geometry to that scale.
    #[arg(long)]
    pub size: Option<usize>,
    /// Detector cells (defaults to the desk detector width resampled).
    #[arg(long)]
    pub detectors: Option<usize>,
    /// Standard deviation of additive Gaussian sinogram noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Relative weight of crosses among hole shapes.
    #[arg(long)]
    pub cross_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterName {
    Hann,
    RamLak,
}

#[derive(Debug, Args)]
pub struct FbpArgs {
    /// JSON file with any of the fields printed by --print-config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sino: Option<PathBuf>,
    /// Angular window "A:B" in degrees (default: every row).
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long, value_enum)]
    pub filter: Option<FilterName>,
    /// Filter cutoff as a fraction of Nyquist.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Output image (.laim, or .pgm/.png for a viewable export).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelPreset {
    /// 512x512 output from 560-cell sinograms.
    Full,
    /// 128x128 output from 140-cell sinograms.
    Desk,
    /// 64x64 output from 70-cell sinograms.
    Desk64,
}

impl ModelPreset {
    pub fn config(self) -> lact_nn::ModelConfig {
        match self {
            ModelPreset::Full => lact_nn::ModelConfig::full(),
            ModelPreset::Desk => lact_nn::ModelConfig::desk(),
            ModelPreset::Desk64 => lact_nn::ModelConfig::desk64(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint written after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Network size; replaces the model section of --config.
    #[arg(long, value_enum)]
    pub model: Option<ModelPreset>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on this window span only.
    #[arg(long)]
    pub fixed_range: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Continue from a checkpoint with optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Training log CSV (default: next to the checkpoint).
    #[arg(long)]
    pub log_csv: Option<PathBuf>,
    /// Holdout evaluation CSV (default: next to the checkpoint).
    #[arg(long)]
    pub eval_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// A sinogram file, or a dataset directory for batch mode.
    #[arg(long)]
    pub sino: Option<PathBuf>,
    /// Window "A:B" in degrees (single-file mode).
    #[arg(long)]
    pub range: Option<String>,
    /// Difficulty levels to reconstruct (batch mode), e.g. 1..7.
    #[arg(long)]
    pub levels: Option<String>,
    /// Window start angle in batch mode.
    #[arg(long)]
    pub start: Option<f64>,
    /// Output image, or output directory in batch mode.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predictions: `level_<k>/<name>.laim`, falling back to `<name>.laim`.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground-truth `.laim` images.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<String>,
    /// Per-sample metrics CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-level summary CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Angular,
    Position,
    Datasize,
    Crosses,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<SweepKind>,
    /// Checkpoints to score, as PATH or NAME=PATH (repeatable).
    #[arg(long)]
    pub ckpt: Vec<String>,
    /// Evaluation dataset directory (default: generated from --eval-count/--eval-seed).
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub eval_count: Option<usize>,
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// Fixed window start angle (default: a seeded random start per sample).
    #[arg(long)]
    pub start: Option<f64>,
    /// Angular sweep spans as lo:hi:step degrees.
    #[arg(long)]
    pub spans: Option<String>,
    /// Position sweep offsets as lo:hi:step pixels.
    #[arg(long)]
    pub offsets: Option<String>,
    /// Window span for the position and dataset-size sweeps.
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub levels: Option<String>,
    /// Training config for the dataset-size sweep.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Comma-separated training-set sizes.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Parameter updates per dataset-size model.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(cli.log).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a, cli.print_config),
        Command::Fbp(a) => commands::fbp(a, cli.print_config),
        Command::Train(a) => commands::train(a, cli.print_config),
        Command::Reconstruct(a) => commands::reconstruct(a, cli.print_config),
        Command::Eval(a) => commands::eval(a, cli.print_config),
        Command::Sweep(a) => commands::sweep(a, cli.print_config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
