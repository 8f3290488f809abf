//! Subcommand runners.
//!
//! Every runner follows the same two-stage error discipline: failures while
//! loading or validating flags, configuration and input files are
//! [`CliError::Validation`] (exit code 1); failures while executing the
//! algorithms or writing outputs are [`CliError::Runtime`] (exit code 2).

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context as _;
use serde::Deserialize;

use cyclelane_core::bench::{
    blackout_sweep, evaluate, rank_videos, write_curve_csv, write_dataset, write_report_json,
    write_worklist_csv, EvalConfig, Protocol, SynthConfig,
};
use cyclelane_core::frames::{
    apply_overrides, label_frames, load_overrides, read_frames_csv, write_labels_csv,
};
use cyclelane_core::geometry::GeoOrigin;
use cyclelane_core::ingest::{build_index, default_rules, load_extract, RuleSet, SegmentIndex};
use cyclelane_core::matcher::{
    classify_trajectory, read_matches_csv, write_matches_csv, MatchConfig, Trajectory,
};
use cyclelane_core::model::{
    flatten_steps, forward, load_checkpoint, load_dataset, read_feature_cache, save_checkpoint,
    train_phase1, train_phase2, FeatureSequence, ModelConfig, TrainConfig, TrainReport, VideoData,
};
use cyclelane_core::taxonomy::{dump_document, SubClass};

use crate::{
    BenchBlackoutArgs, BenchCommand, BenchEvaluateArgs, BenchGenerateArgs, BenchRankArgs, Command,
    IngestArgs, LabelFramesArgs, MatchArgs, PhaseArg, PredictArgs, ProtocolArg, TaxonomyCommand,
    TrainArgs,
};

/// Failure of a subcommand, split by stage for the process exit code.
pub enum CliError {
    /// Bad flags, configuration or input files (exit 1).
    Validation(anyhow::Error),
    /// Failure while executing or writing outputs (exit 2).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn validation(e: impl Into<anyhow::Error>) -> Self {
        CliError::Validation(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }
}

fn invalid(e: anyhow::Error) -> CliError {
    CliError::Validation(e)
}

fn failed(e: anyhow::Error) -> CliError {
    CliError::Runtime(e)
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Taxonomy { command: TaxonomyCommand::Dump } => run_taxonomy_dump(),
        Command::Ingest(args) => run_ingest(args),
        Command::Match(args) => run_match(args),
        Command::LabelFrames(args) => run_label_frames(args),
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Bench { command } => match command {
            BenchCommand::Generate(args) => run_bench_generate(args),
            BenchCommand::Evaluate(args) => run_bench_evaluate(args),
            BenchCommand::Blackout(args) => run_bench_blackout(args),
            BenchCommand::Rank(args) => run_bench_rank(args),
        },
    }
}

fn protocol_of(arg: ProtocolArg) -> Protocol {
    match arg {
        ProtocolArg::Proposed => Protocol::Proposed,
        ProtocolArg::NoFuture => Protocol::NoFuture,
        ProtocolArg::NoTemporal => Protocol::NoTemporal,
    }
}

/// Print a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write as _;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}").and_then(|()| stdout.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(CliError::runtime(anyhow::Error::new(e).context("writing to stdout"))),
    }
}

fn run_taxonomy_dump() -> Result<(), CliError> {
    let doc = serde_json::to_string_pretty(&dump_document()).expect("taxonomy serializes");
    print_stdout(&doc)
}

fn run_ingest(args: IngestArgs) -> Result<(), CliError> {
    if !(args.cell_size.is_finite() && args.cell_size > 0.0) {
        return Err(CliError::validation(anyhow::anyhow!(
            "--cell-size must be a positive number, got {}",
            args.cell_size
        )));
    }
    let owned_rules;
    let rules: &RuleSet = match &args.rules {
        Some(path) => {
            owned_rules = RuleSet::from_path(path)
                .with_context(|| format!("loading rules {}", path.display()))
                .map_err(invalid)?;
            &owned_rules
        }
        None => default_rules(),
    };
    let extract = load_extract(&args.network)
        .with_context(|| format!("loading network extract {}", args.network.display()))
        .map_err(invalid)?;
    if extract.warnings.total() > 0 {
        let w = &extract.warnings;
        eprintln!(
            "warning: skipped {} non-linestring geometries, {} short ways, {} duplicate way ids",
            w.skipped_geometries, w.short_ways, w.duplicate_way_ids
        );
    }
    let origin = match (args.origin_lat, args.origin_lon) {
        (Some(lat), Some(lon)) => GeoOrigin::new(lat, lon)
            .context("invalid --origin-lat/--origin-lon")
            .map_err(invalid)?,
        _ => extract
            .centroid_origin()
            .with_context(|| format!("deriving origin from {}", args.network.display()))
            .map_err(invalid)?,
    };
    let (index, stats) = build_index(&extract, origin, args.cell_size, rules)
        .context("building segment index")
        .map_err(failed)?;
    eprintln!(
        "ingested {} ways: {} segments in {} cells ({} ways unclassifiable, {} degenerate pairs skipped)",
        stats.ways_total,
        stats.segments_built,
        stats.grid_cells,
        stats.ways_unclassifiable,
        stats.degenerate_segments_skipped
    );
    if stats.empty_index() {
        eprintln!("warning: no way matched any classification rule; the index is empty");
    }
    index
        .save(&args.out)
        .with_context(|| format!("writing index {}", args.out.display()))
        .map_err(failed)
}

fn run_match(args: MatchArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => MatchConfig::from_path(path)
            .with_context(|| format!("loading matcher config {}", path.display()))
            .map_err(invalid)?,
        None => MatchConfig::default(),
    };
    if let Some(v) = args.time_window {
        cfg.time_window = v;
    }
    if let Some(v) = args.max_distance {
        cfg.max_distance = v;
    }
    if let Some(v) = args.max_angle {
        cfg.max_angle = v;
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = args.w_perp {
        cfg.w_perp = v;
    }
    if let Some(v) = args.w_colin {
        cfg.w_colin = v;
    }
    cfg.validate().context("invalid matcher configuration").map_err(invalid)?;
    let index = SegmentIndex::load(&args.index)
        .with_context(|| format!("loading segment index {}", args.index.display()))
        .map_err(invalid)?;
    let trajectory = Trajectory::from_csv_path(&args.trajectory)
        .with_context(|| format!("loading trajectory {}", args.trajectory.display()))
        .map_err(invalid)?;
    let labeled = classify_trajectory(&trajectory, &index, &cfg)
        .context("matching trajectory")
        .map_err(failed)?;
    let matched = labeled.iter().filter(|c| c.sub_class.is_some()).count();
    eprintln!("matched {matched} of {} trajectory points", labeled.len());
    write_matches_csv(&args.out, &labeled)
        .with_context(|| format!("writing matches {}", args.out.display()))
        .map_err(failed)
}

fn run_label_frames(args: LabelFramesArgs) -> Result<(), CliError> {
    let coords = read_matches_csv(&args.matches)
        .with_context(|| format!("loading matches {}", args.matches.display()))
        .map_err(invalid)?;
    let frames = read_frames_csv(&args.frames)
        .with_context(|| format!("loading frame timestamps {}", args.frames.display()))
        .map_err(invalid)?;
    let overrides = match &args.overrides {
        Some(path) => Some(
            load_overrides(path)
                .with_context(|| format!("loading overrides {}", path.display()))
                .map_err(invalid)?,
        ),
        None => None,
    };
    let (mut labels, stats) =
        label_frames(&coords, &frames).context("labeling frames").map_err(failed)?;
    if stats.empty_coords {
        eprintln!("warning: no labeled coordinates; every frame is unlabeled");
    }
    if let Some(entries) = overrides {
        labels =
            apply_overrides(&labels, &entries).context("applying overrides").map_err(failed)?;
    }
    let labeled = labels.iter().filter(|l| l.sub_class.is_some()).count();
    eprintln!(
        "labeled {labeled} of {} frames ({} unlabeled)",
        labels.len(),
        stats.unlabeled_frames
    );
    write_labels_csv(&args.out, &labels)
        .with_context(|| format!("writing labels {}", args.out.display()))
        .map_err(failed)
}

/// On-disk training configuration: both sections optional, both defaulted.
#[derive(Default, Deserialize)]
#[serde(default)]
struct TrainFile {
    model: ModelConfig,
    train: TrainConfig,
}

fn load_train_file(path: Option<&Path>) -> Result<TrainFile, CliError> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading training config {}", path.display()))
                .map_err(invalid)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing training config {}", path.display()))
                .map_err(invalid)
        }
        None => Ok(TrainFile::default()),
    }
}

fn dataset_feature_dim(videos: &[VideoData]) -> usize {
    videos[0].sequences[0].features.ncols()
}

fn check_feature_dim(videos: &[VideoData], model: &ModelConfig) -> Result<(), CliError> {
    let found = dataset_feature_dim(videos);
    if found != model.feature_dim {
        return Err(CliError::validation(anyhow::anyhow!(
            "dataset feature dimension {found} does not match model feature dimension {}",
            model.feature_dim
        )));
    }
    Ok(())
}

fn print_epoch_losses(phase: u8, report: &TrainReport) {
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        eprintln!("phase {phase} epoch {}: loss {loss:.6}", epoch + 1);
    }
}

fn all_sequences(videos: Vec<VideoData>) -> Vec<FeatureSequence> {
    videos.into_iter().flat_map(|v| v.sequences).collect()
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let file = load_train_file(args.config.as_deref())?;
    let mut train_cfg = file.train;
    if let Some(seed) = args.seed {
        train_cfg.seed = seed;
    }
    train_cfg.validate().context("invalid training configuration").map_err(invalid)?;
    if args.phase != PhaseArg::Two && args.init.is_some() {
        return Err(CliError::validation(anyhow::anyhow!("--init is only used with --phase 2")));
    }
    let videos = load_dataset(&args.manifest)
        .with_context(|| format!("loading dataset {}", args.manifest.display()))
        .map_err(invalid)?;
    let params = match args.phase {
        PhaseArg::One => {
            file.model.validate().context("invalid model configuration").map_err(invalid)?;
            check_feature_dim(&videos, &file.model)?;
            let samples = flatten_steps(&videos);
            let report = train_phase1(&samples, file.model, &train_cfg)
                .context("phase-1 training")
                .map_err(failed)?;
            print_epoch_losses(1, &report);
            report.params
        }
        PhaseArg::Two => {
            let init = args.init.as_ref().ok_or_else(|| {
                CliError::validation(anyhow::anyhow!("--phase 2 requires --init CHECKPOINT"))
            })?;
            let start = load_checkpoint(init)
                .with_context(|| format!("loading checkpoint {}", init.display()))
                .map_err(invalid)?;
            check_feature_dim(&videos, &start.config)?;
            let sequences = all_sequences(videos);
            let report = train_phase2(&sequences, &start, &train_cfg)
                .context("phase-2 training")
                .map_err(failed)?;
            print_epoch_losses(2, &report);
            report.params
        }
        PhaseArg::Both => {
            file.model.validate().context("invalid model configuration").map_err(invalid)?;
            check_feature_dim(&videos, &file.model)?;
            let samples = flatten_steps(&videos);
            let report1 = train_phase1(&samples, file.model, &train_cfg)
                .context("phase-1 training")
                .map_err(failed)?;
            print_epoch_losses(1, &report1);
            let sequences = all_sequences(videos);
            let report2 = train_phase2(&sequences, &report1.params, &train_cfg)
                .context("phase-2 training")
                .map_err(failed)?;
            print_epoch_losses(2, &report2);
            report2.params
        }
    };
    save_checkpoint(&args.out, &params)
        .with_context(|| format!("writing checkpoint {}", args.out.display()))
        .map_err(failed)?;
    eprintln!("saved checkpoint {} ({} parameters)", args.out.display(), params.param_count());
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<(), CliError> {
    let params = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))
        .map_err(invalid)?;
    let cache = read_feature_cache(&args.features)
        .with_context(|| format!("loading feature cache {}", args.features.display()))
        .map_err(invalid)?;
    cache
        .check_model(&params.config)
        .context("feature cache does not fit the checkpoint")
        .map_err(invalid)?;
    let mut out = String::from("step,main_class,sub_class,main_prob,sub_prob\n");
    let n = cache.sequence_length;
    for (si, features) in cache.sequences.iter().enumerate() {
        let predictions =
            forward(&params, features, args.causal).context("running the model").map_err(failed)?;
        for (i, pred) in predictions.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                si * n + i,
                pred.main_argmax.name(),
                pred.sub_argmax.name(),
                pred.main_prob(),
                pred.sub_prob()
            )
            .expect("write to string");
        }
    }
    eprintln!(
        "predicted {} steps across {} sequences",
        n * cache.sequences.len(),
        cache.sequences.len()
    );
    std::fs::write(&args.out, out)
        .with_context(|| format!("writing predictions {}", args.out.display()))
        .map_err(failed)
}

fn parse_classes(names: &[String]) -> Result<Vec<SubClass>, CliError> {
    names
        .iter()
        .map(|name| {
            SubClass::from_name(name.trim())
                .with_context(|| format!("unknown class {name:?} in --classes"))
                .map_err(invalid)
        })
        .collect()
}

fn run_bench_generate(args: BenchGenerateArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading generator config {}", path.display()))
                .map_err(invalid)?;
            serde_json::from_str::<SynthConfig>(&text)
                .with_context(|| format!("parsing generator config {}", path.display()))
                .map_err(invalid)?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(v) = args.signal_rate {
        cfg.signal_rate = v;
    }
    if let Some(v) = args.noise_std {
        cfg.noise_std = v;
    }
    if let Some(v) = args.feature_dim {
        cfg.feature_dim = v;
    }
    if let Some(v) = args.sequence_length {
        cfg.sequence_length = v;
    }
    if let Some(names) = &args.classes {
        cfg.classes = parse_classes(names)?;
    }
    cfg.validate().context("invalid generator configuration").map_err(invalid)?;
    if args.count == 0 {
        return Err(CliError::validation(anyhow::anyhow!("--count must be at least 1")));
    }
    if args.latent_dim == 0 {
        return Err(CliError::validation(anyhow::anyhow!("--latent-dim must be at least 1")));
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating output directory {}", args.out_dir.display()))
        .map_err(failed)?;
    let files = write_dataset(&args.out_dir, &cfg, args.count, args.latent_dim, &args.video_id)
        .with_context(|| format!("writing dataset to {}", args.out_dir.display()))
        .map_err(failed)?;
    eprintln!(
        "wrote {} sequences of {} steps ({} classes, signal rate {}, noise {}) to {}",
        args.count,
        cfg.sequence_length,
        cfg.classes.len(),
        cfg.signal_rate,
        cfg.noise_std,
        files.manifest.display()
    );
    Ok(())
}

fn load_eval_config(
    path: Option<&Path>,
    window: Option<usize>,
    stride: Option<usize>,
    protocol: Protocol,
    feature_dim: usize,
) -> Result<EvalConfig, CliError> {
    let mut cfg = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading evaluation config {}", path.display()))
                .map_err(invalid)?;
            serde_json::from_str::<EvalConfig>(&text)
                .with_context(|| format!("parsing evaluation config {}", path.display()))
                .map_err(invalid)?
        }
        None => EvalConfig::default(),
    };
    if let Some(v) = window {
        cfg.window = v;
    }
    if let Some(v) = stride {
        cfg.stride = v;
    }
    cfg.validate(protocol, feature_dim)
        .context("invalid evaluation configuration")
        .map_err(invalid)?;
    Ok(cfg)
}

fn run_bench_evaluate(args: BenchEvaluateArgs) -> Result<(), CliError> {
    let params = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))
        .map_err(invalid)?;
    let videos = load_dataset(&args.manifest)
        .with_context(|| format!("loading dataset {}", args.manifest.display()))
        .map_err(invalid)?;
    let protocol = protocol_of(args.protocol);
    let cfg = load_eval_config(
        args.eval_config.as_deref(),
        args.window,
        args.stride,
        protocol,
        params.config.feature_dim,
    )?;
    let report = evaluate(&params, &videos, protocol, &cfg)
        .context("evaluating checkpoint")
        .map_err(failed)?;
    eprintln!(
        "{} protocol: {} labeled steps, main micro {:.4} / macro {:.4}, sub micro {:.4} / macro {:.4}",
        protocol.name(),
        report.labeled_steps,
        report.main_micro_accuracy,
        report.main_macro_accuracy,
        report.sub_micro_accuracy,
        report.sub_macro_accuracy
    );
    match &args.report {
        Some(path) => write_report_json(path, &report)
            .with_context(|| format!("writing report {}", path.display()))
            .map_err(failed),
        None => {
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            print_stdout(&json)
        }
    }
}

fn run_bench_blackout(args: BenchBlackoutArgs) -> Result<(), CliError> {
    if args.passes == 0 {
        return Err(CliError::validation(anyhow::anyhow!("--passes must be at least 1")));
    }
    let mut checkpoints = Vec::with_capacity(args.checkpoints.len());
    for path in &args.checkpoints {
        let params = load_checkpoint(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))
            .map_err(invalid)?;
        checkpoints.push(params);
    }
    let feature_dim = checkpoints[0].config.feature_dim;
    if let Some(odd) = checkpoints.iter().find(|p| p.config.feature_dim != feature_dim) {
        return Err(CliError::validation(anyhow::anyhow!(
            "checkpoints disagree on the feature dimension ({feature_dim} vs {})",
            odd.config.feature_dim
        )));
    }
    let videos = load_dataset(&args.manifest)
        .with_context(|| format!("loading dataset {}", args.manifest.display()))
        .map_err(invalid)?;
    let protocol = protocol_of(args.protocol);
    let cfg = load_eval_config(
        args.eval_config.as_deref(),
        args.window,
        args.stride,
        protocol,
        feature_dim,
    )?;
    let curve = blackout_sweep(&checkpoints, &videos, protocol, &cfg, args.passes, args.seed)
        .context("running blackout sweep")
        .map_err(failed)?;
    let first = curve.points.first().expect("curve has 21 points");
    let last = curve.points.last().expect("curve has 21 points");
    eprintln!(
        "blackout sweep over {} checkpoints x {} passes: mean accuracy {:.4} at p={:.2}, {:.4} at p={:.2}",
        checkpoints.len(),
        args.passes,
        first.mean,
        first.p,
        last.mean,
        last.p
    );
    write_curve_csv(&args.out, &curve)
        .with_context(|| format!("writing curve {}", args.out.display()))
        .map_err(failed)
}

fn run_bench_rank(args: BenchRankArgs) -> Result<(), CliError> {
    let params = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))
        .map_err(invalid)?;
    let mut videos = Vec::new();
    for path in &args.manifests {
        let mut loaded = load_dataset(path)
            .with_context(|| format!("loading dataset {}", path.display()))
            .map_err(invalid)?;
        videos.append(&mut loaded);
    }
    let protocol = protocol_of(args.protocol);
    let cfg = load_eval_config(
        args.eval_config.as_deref(),
        args.window,
        args.stride,
        protocol,
        params.config.feature_dim,
    )?;
    let ranks =
        rank_videos(&params, &videos, protocol, &cfg).context("ranking videos").map_err(failed)?;
    if let Some(worst) = ranks.first() {
        eprintln!(
            "ranked {} videos; worst is {} at sub accuracy {:.4}",
            ranks.len(),
            worst.video_id,
            worst.accuracy
        );
    }
    write_worklist_csv(&args.out, &ranks, args.worst)
        .with_context(|| format!("writing worklist {}", args.out.display()))
        .map_err(failed)
}
