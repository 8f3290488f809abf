//! `cyclelane` — one binary wiring the pipeline end to end:
//! network ingestion, GPS matching, frame labeling, model training,
//! prediction and the synthetic benchmark harness.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, missing or
//! invalid input files, bad configuration), 2 on runtime errors (failures
//! while processing or writing outputs). Diagnostics go to standard error;
//! data goes to files named by flags or to standard output.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "cyclelane",
    version,
    about = "Cycling-infrastructure auto-labeling pipeline and temporal classifier",
    propagate_version = true
)]
pub struct Cli {
    /// Cap the number of worker threads (default: all cores; the
    /// CYCLELANE_THREADS environment variable is used when the flag is
    /// absent).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Inspect the infrastructure class taxonomy.
    Taxonomy {
        #[command(subcommand)]
        command: TaxonomyCommand,
    },
    /// Parse a road-network extract and build a classified segment index.
    Ingest(IngestArgs),
    /// Label every point of a GPS trajectory against a segment index.
    Match(MatchArgs),
    /// Interpolate labeled coordinates onto video-frame timestamps.
    LabelFrames(LabelFramesArgs),
    /// Train the temporal classifier from a dataset manifest.
    Train(TrainArgs),
    /// Predict per-step classes from a feature cache.
    Predict(PredictArgs),
    /// Synthetic benchmark: generate data, evaluate, sweep blackout, rank.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand)]
pub enum TaxonomyCommand {
    /// Print the five main and thirteen sub classes as JSON to stdout.
    Dump,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Road-network extract (GeoJSON FeatureCollection of LineStrings).
    #[arg(long, value_name = "FILE")]
    pub network: PathBuf,
    /// Output path for the segment index (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Classification rules (JSON); built-in rule table when absent.
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
    /// Spatial grid cell size in meters.
    #[arg(long, value_name = "M", default_value_t = 50.0)]
    pub cell_size: f64,
    /// Projection origin latitude; defaults to the extract centroid.
    #[arg(long, value_name = "DEG", requires = "origin_lon")]
    pub origin_lat: Option<f64>,
    /// Projection origin longitude; defaults to the extract centroid.
    #[arg(long, value_name = "DEG", requires = "origin_lat")]
    pub origin_lon: Option<f64>,
}

#[derive(Args)]
pub struct MatchArgs {
    /// Segment index produced by `ingest`.
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    /// Trajectory CSV with `timestamp,lat,lon` rows.
    #[arg(long, value_name = "FILE")]
    pub trajectory: PathBuf,
    /// Output CSV of labeled coordinates.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Matcher configuration (JSON); flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seconds of trajectory context for the local heading fit.
    #[arg(long, value_name = "S")]
    pub time_window: Option<f64>,
    /// Candidate gate: maximum point-to-segment distance in meters.
    #[arg(long, value_name = "M")]
    pub max_distance: Option<f64>,
    /// Candidate gate: maximum heading difference in degrees.
    #[arg(long, value_name = "DEG")]
    pub max_angle: Option<f64>,
    /// Additive distance offset in the matching score.
    #[arg(long, value_name = "M")]
    pub epsilon: Option<f64>,
    /// Weight of the perpendicular distance term.
    #[arg(long, value_name = "W")]
    pub w_perp: Option<f64>,
    /// Weight of the colinear distance term.
    #[arg(long, value_name = "W")]
    pub w_colin: Option<f64>,
}

#[derive(Args)]
pub struct LabelFramesArgs {
    /// Labeled coordinates CSV produced by `match`.
    #[arg(long, value_name = "FILE")]
    pub matches: PathBuf,
    /// Frame timestamps CSV with `frame_index,timestamp` rows.
    #[arg(long, value_name = "FILE")]
    pub frames: PathBuf,
    /// Output CSV of per-frame labels.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Manual override ranges (JSON), applied after interpolation.
    #[arg(long, value_name = "FILE")]
    pub overrides: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    /// Per-step encoder/decoder training only.
    #[value(name = "1")]
    One,
    /// Temporal fine-tuning from phase-1 parameters (`--init`).
    #[value(name = "2")]
    Two,
    /// Phase 1 followed by phase 2.
    Both,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset manifest (JSON referencing feature caches and label CSVs).
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Which training phase to run.
    #[arg(long, value_enum)]
    pub phase: PhaseArg,
    /// Output checkpoint path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Training configuration (JSON with optional `model` and `train`
    /// sections); built-in defaults when absent.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Phase-1 checkpoint to warm-start from (required for `--phase 2`;
    /// phase 2 reads only the `train` config section and keeps the
    /// checkpoint's architecture).
    #[arg(long, value_name = "FILE")]
    pub init: Option<PathBuf>,
    /// Override the training seed from the config file.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Model checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Binary feature cache to predict on.
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Output CSV: `step,main_class,sub_class,main_prob,sub_prob`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Restrict attention to past-and-present steps.
    #[arg(long)]
    pub causal: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    /// Bidirectional attention, center-of-window outputs.
    #[value(name = "proposed")]
    Proposed,
    /// Causal attention, most-recent-window outputs.
    #[value(name = "no_future")]
    NoFuture,
    /// Per-step model without attention.
    #[value(name = "no_temporal")]
    NoTemporal,
}

#[derive(Subcommand)]
pub enum BenchCommand {
    /// Generate a synthetic sparse-signal dataset on disk.
    Generate(BenchGenerateArgs),
    /// Evaluate a checkpoint on a dataset under a sampling protocol.
    Evaluate(BenchEvaluateArgs),
    /// Sweep blackout probabilities over several checkpoints.
    Blackout(BenchBlackoutArgs),
    /// Rank videos worst-to-best for human review.
    Rank(BenchRankArgs),
}

#[derive(Args)]
pub struct BenchGenerateArgs {
    /// Directory receiving manifest.json, features.bin and labels.csv.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Number of sequences to generate.
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub count: usize,
    /// Generator configuration (JSON); flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Generator seed.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Per-step probability that the class signature is visible.
    #[arg(long, value_name = "P")]
    pub signal_rate: Option<f64>,
    /// Standard deviation of the additive feature noise.
    #[arg(long, value_name = "STD")]
    pub noise_std: Option<f64>,
    /// Feature dimension F.
    #[arg(long, value_name = "F")]
    pub feature_dim: Option<usize>,
    /// Steps per sequence N.
    #[arg(long, value_name = "N")]
    pub sequence_length: Option<usize>,
    /// Ground-truth sub-class names (comma separated); the five standard
    /// benchmark classes when absent.
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Latent dimension recorded in the cache header.
    #[arg(long, value_name = "D", default_value_t = 64)]
    pub latent_dim: usize,
    /// Video id recorded in the manifest.
    #[arg(long, value_name = "ID", default_value = "synthetic")]
    pub video_id: String,
}

#[derive(Args)]
pub struct BenchEvaluateArgs {
    /// Model checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Dataset manifest.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Sampling protocol.
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Write the full report JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Evaluation configuration (JSON); flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub eval_config: Option<PathBuf>,
    /// Window length for the temporal protocols.
    #[arg(long, value_name = "N")]
    pub window: Option<usize>,
    /// Window stride (also the recorded block size).
    #[arg(long, value_name = "N")]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct BenchBlackoutArgs {
    /// Model checkpoints (repeat the flag; typically 3 training seeds).
    #[arg(long = "checkpoint", value_name = "FILE", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Dataset manifest.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Output CSV: `p,mean,min,max` over 21 probabilities.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Sampling protocol.
    #[arg(long, value_enum, default_value = "proposed")]
    pub protocol: ProtocolArg,
    /// Fresh blackout passes per checkpoint and probability.
    #[arg(long, value_name = "N", default_value_t = 2)]
    pub passes: usize,
    /// Blackout mask seed.
    #[arg(long, value_name = "SEED", default_value_t = 42)]
    pub seed: u64,
    /// Evaluation configuration (JSON); flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub eval_config: Option<PathBuf>,
    /// Window length for the temporal protocols.
    #[arg(long, value_name = "N")]
    pub window: Option<usize>,
    /// Window stride (also the recorded block size).
    #[arg(long, value_name = "N")]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct BenchRankArgs {
    /// Model checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Dataset manifests (repeat the flag for several videos).
    #[arg(long = "manifest", value_name = "FILE", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Output worklist CSV: `video_id,accuracy`, worst first.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Sampling protocol.
    #[arg(long, value_enum, default_value = "proposed")]
    pub protocol: ProtocolArg,
    /// Keep only the worst K videos in the worklist.
    #[arg(long, value_name = "K")]
    pub worst: Option<usize>,
    /// Evaluation configuration (JSON); flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub eval_config: Option<PathBuf>,
    /// Window length for the temporal protocols.
    #[arg(long, value_name = "N")]
    pub window: Option<usize>,
    /// Window stride (also the recorded block size).
    #[arg(long, value_name = "N")]
    pub stride: Option<usize>,
}

fn setup_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CYCLELANE_THREADS") {
            Ok(value) => Some(value.parse::<usize>().map_err(|_| {
                CliError::validation(anyhow::anyhow!(
                    "CYCLELANE_THREADS must be a positive integer, got {value:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::validation(anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(anyhow::anyhow!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

/// Context line plus its immediate cause. The cause's own `Display` already
/// embeds anything deeper, so the full anyhow chain would print sources twice.
fn render_error(e: &anyhow::Error) -> String {
    let mut chain = e.chain();
    let head = chain.next().map(|c| c.to_string()).unwrap_or_default();
    match chain.next() {
        Some(cause) => format!("{head}: {cause}"),
        None => head,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = setup_threads(cli.threads).and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(e)) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(2)
        }
    }
}
