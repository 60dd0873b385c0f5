mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_list, List, UsageError};

#[derive(Debug, Parser)]
#[command(name = "deeppt", version, about = "Learned point tracking: training, tracking and evaluation")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (1 = serial reference mode).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// RNG seed recorded in every output.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for all outputs.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the conv stack on tracking samples.
    TrainTracker(TrainTrackerArgs),
    /// Train the match-score head with the conv stack frozen.
    TrainScore(TrainScoreArgs),
    /// Train the trackability head from the tracker's own successes.
    TrainDetector(TrainDetectorArgs),
    /// Extract tracking samples around Harris corners of KITTI frame pairs.
    GenSamples(GenSamplesArgs),
    /// Render synthetic translation samples.
    GenSynthetic(GenSyntheticArgs),
    /// Run the detect/track loop over a directory of frames.
    Track(TrackArgs),
    /// x-pixel accuracy on KITTI points or a sample cache.
    EvalKitti(EvalKittiArgs),
    /// Error at 95% recall of the match-score head on UBC pairs.
    EvalUbc(EvalUbcArgs),
    /// Homography back-projection error of correspondences.
    EvalBackproj(EvalBackprojArgs),
    /// Draw a track table over its frames.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ArchFlags {
    /// Ten comma-separated channel widths, input first.
    #[arg(long, value_parser = parse_list::<usize>)]
    pub widths: Option<List<usize>>,
    /// Two comma-separated hidden widths of the score head.
    #[arg(long, value_parser = parse_list::<usize>)]
    pub score_hidden: Option<List<usize>>,
    #[arg(long)]
    pub detector_hidden: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainTrackerArgs {
    /// Sample cache written by gen-samples or gen-synthetic.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Train on this many freshly rendered synthetic samples instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Held-out synthetic samples for the accuracy report.
    #[arg(long)]
    pub holdout: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub arch: ArchFlags,
}

#[derive(Debug, Args)]
pub struct TrainScoreArgs {
    /// Weights holding the trained conv stack.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// UBC directory (defaults to $DEEPPT_DATA/ubc).
    #[arg(long)]
    pub ubc: Option<PathBuf>,
    #[arg(long)]
    pub match_file: Option<String>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Use match pairs built from this many synthetic samples instead of UBC.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct TrainDetectorArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Label this many synthetic samples (half rendered at low contrast).
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct GenSamplesArgs {
    /// KITTI flow root with image_0|image_2 and flow_noc|flow_occ
    /// (defaults to $DEEPPT_DATA/kitti).
    #[arg(long)]
    pub kitti: Option<PathBuf>,
    #[arg(long)]
    pub max_per_pair: Option<usize>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    #[arg(long)]
    pub harris_threshold: Option<f64>,
    #[arg(long)]
    pub harris_nms_radius: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Directory of frames, processed in file-name order.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// `network` or `klt`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub min_live: Option<usize>,
    #[arg(long)]
    pub score_threshold: Option<f64>,
    #[arg(long)]
    pub detect_threshold: Option<f64>,
    #[arg(long)]
    pub max_tracks: Option<usize>,
    #[arg(long)]
    pub nms_radius: Option<usize>,
    #[arg(long)]
    pub scan_stride: Option<usize>,
    /// Skip the PNG overlays.
    #[arg(long)]
    pub no_overlays: bool,
}

#[derive(Debug, Args)]
pub struct EvalKittiArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub kitti: Option<PathBuf>,
    /// Evaluate the network on a sample cache instead of KITTI frames.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub max_per_pair: Option<usize>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Comma-separated pixel thresholds.
    #[arg(long, value_parser = parse_list::<f64>)]
    pub thresholds: Option<List<f64>>,
}

#[derive(Debug, Args)]
pub struct EvalUbcArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub ubc: Option<PathBuf>,
    #[arg(long)]
    pub match_file: Option<String>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Name of the set the score head was trained on, for the report.
    #[arg(long)]
    pub train_set: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalBackprojArgs {
    /// `x_prev y_prev x_curr y_curr patch_id` lines.
    #[arg(long)]
    pub correspondences: Option<PathBuf>,
    /// Directory of `<patch_id>.txt` files with nine row-major reals.
    #[arg(long)]
    pub homographies: Option<PathBuf>,
    #[arg(long)]
    pub inlier_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Track table written by `track`.
    #[arg(long)]
    pub tracks: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<deeppt::Error>() {
        Some(deeppt::Error::Usage(_)) | Some(deeppt::Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
