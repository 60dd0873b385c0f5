use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use deeppt::datasets::harris::{DEFAULT_K, DEFAULT_NMS_RADIUS, DEFAULT_THRESHOLD};
use deeppt::datasets::{
    decode_kitti_flow, find_kitti_pairs, generate_tracking_samples, harris_corners, load_gray_image,
    make_mixed_contrast_translations, make_synthetic_translations, parse_ubc_dataset, GrayImage, SampleStats,
};
use deeppt::eval::{
    backprojection_report, error_at_95_recall, load_homographies, parse_correspondences, pixel_accuracy,
    reference, AccuracyReport, AccuracyRow, MatchingReport, PredictionRecord, DEFAULT_INLIER_THRESHOLD,
    DEFAULT_THRESHOLDS,
};
use deeppt::heads::{
    generate_detector_labels, make_match_pairs, pair_match_score, point_feature, train_detector_head,
    train_score_head, trackability_score, LabeledPair,
};
use deeppt::klt::{fb_track, format_klt_table, inside_lk_margins, klt_track_sequence, Pyramid};
use deeppt::nn::TrainConfig;
use deeppt::pipeline::{format_track_table, parse_track_table, run_sequence, save_overlays, PipelineConfig};
use deeppt::tracker::{read_samples, track_patch, write_samples, Architecture, TrackingSample};
use deeppt::Network;

use crate::config::{
    existing_path, load_file_config, optional_existing, usage, write_json, FileConfig, TrainOverrides,
};
use crate::{
    ArchFlags, Cli, Command, EvalBackprojArgs, EvalKittiArgs, EvalUbcArgs, GenSamplesArgs, GenSyntheticArgs,
    TrackArgs, TrainDetectorArgs, TrainFlags, TrainScoreArgs, TrainTrackerArgs, VisualizeArgs,
};

const LK_LEVELS: usize = 3;
const DEFAULT_SYNTHETIC_COUNT: usize = 2000;
const DEFAULT_MAX_PER_PAIR: usize = 200;
const LOW_CONTRAST: f64 = 0.03;

struct Ctx {
    file: FileConfig,
    seed: u64,
    threads: Option<usize>,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// The fully resolved configuration, next to every other output.
    fn record(&self, command: &str, resolved: serde_json::Value) -> Result<()> {
        write_json(
            &self.path("config.json"),
            &json!({
                "command": command,
                "seed": self.seed,
                "threads": self.threads,
                "resolved": resolved,
            }),
        )
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::TrainTracker(_) => "train-tracker",
        Command::TrainScore(_) => "train-score",
        Command::TrainDetector(_) => "train-detector",
        Command::GenSamples(_) => "gen-samples",
        Command::GenSynthetic(_) => "gen-synthetic",
        Command::Track(_) => "track",
        Command::EvalKitti(_) => "eval-kitti",
        Command::EvalUbc(_) => "eval-ubc",
        Command::EvalBackproj(_) => "eval-backproj",
        Command::Visualize(_) => "visualize",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = load_file_config(cli.config.as_deref())?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let name = command_name(&cli.command);
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(name)),
        threads: cli.threads,
        file,
    };
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    log::info!("{name}: writing to {}", ctx.out.display());
    match cli.command {
        Command::TrainTracker(a) => train_tracker(&ctx, a),
        Command::TrainScore(a) => train_score(&ctx, a),
        Command::TrainDetector(a) => train_detector(&ctx, a),
        Command::GenSamples(a) => gen_samples(&ctx, a),
        Command::GenSynthetic(a) => gen_synthetic(&ctx, a),
        Command::Track(a) => track(&ctx, a),
        Command::EvalKitti(a) => eval_kitti(&ctx, a),
        Command::EvalUbc(a) => eval_ubc(&ctx, a),
        Command::EvalBackproj(a) => eval_backproj(&ctx, a),
        Command::Visualize(a) => visualize(&ctx, a),
    }
}

fn train_config(ctx: &Ctx, flags: &TrainFlags, base: TrainConfig) -> Result<TrainConfig> {
    let from_flags = TrainOverrides {
        base_lr: flags.lr,
        lr_decay: flags.lr_decay,
        weight_decay: flags.weight_decay,
        momentum: flags.momentum,
        epochs: flags.epochs,
        batch_size: flags.batch_size,
        ..Default::default()
    };
    let config = from_flags
        .over(&ctx.file.train.clone().unwrap_or_default())
        .apply(base, ctx.seed);
    config.validate()?;
    Ok(config)
}

fn architecture(ctx: &Ctx, flags: &ArchFlags) -> Result<Architecture> {
    let mut arch = ctx.file.architecture.clone().unwrap_or_default();
    if let Some(crate::config::List(w)) = &flags.widths {
        arch.widths = w
            .as_slice()
            .try_into()
            .map_err(|_| usage(format!("--widths needs 10 values, got {}", w.len())))?;
    }
    if let Some(crate::config::List(h)) = &flags.score_hidden {
        arch.score_hidden = h
            .as_slice()
            .try_into()
            .map_err(|_| usage(format!("--score-hidden needs 2 values, got {}", h.len())))?;
    }
    if let Some(d) = flags.detector_hidden {
        arch.detector_hidden = d;
    }
    arch.validate()?;
    Ok(arch)
}

fn required_weights(ctx: &Ctx, flag: Option<PathBuf>, command: &str) -> Result<(PathBuf, Network)> {
    let path = flag.or_else(|| ctx.file.weights.clone()).ok_or_else(|| {
        usage(format!(
            "precondition: {command} needs trained tracker weights (--weights FILE)"
        ))
    })?;
    if !path.is_file() {
        return Err(usage(format!("precondition: weights file {} does not exist", path.display())));
    }
    let params = Network::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok((path, params))
}

/// Samples from `--synthetic N` or a cache file.
fn training_samples(
    ctx: &Ctx,
    synthetic: Option<usize>,
    samples: Option<PathBuf>,
    render: impl Fn(usize, u64) -> Vec<TrackingSample>,
) -> Result<(Vec<TrackingSample>, serde_json::Value)> {
    if let Some(n) = synthetic.or(ctx.file.synthetic) {
        if n == 0 {
            return Err(usage("--synthetic must be at least 1"));
        }
        return Ok((render(n, ctx.seed), json!({ "synthetic": n })));
    }
    match optional_existing(samples, ctx.file.samples.clone(), "samples")? {
        Some(p) => {
            let s = read_samples(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok((s, json!({ "samples": p })))
        }
        None => Err(usage("no training data: pass --samples FILE or --synthetic N")),
    }
}

fn predictions(params: &Network, samples: &[TrackingSample]) -> Result<Vec<PredictionRecord>> {
    samples
        .par_iter()
        .map(|s| {
            let (d, _) = track_patch(params, &s.template_tensor(), &s.search_tensor())?;
            let gt = s.displacement();
            Ok(PredictionRecord {
                pred: (d.dx as f64, d.dy as f64),
                gt: (gt.dx as f64, gt.dy as f64),
            })
        })
        .collect()
}

fn train_tracker(ctx: &Ctx, a: TrainTrackerArgs) -> Result<()> {
    let arch = architecture(ctx, &a.arch)?;
    let config = train_config(ctx, &a.train, TrainConfig::tracker())?;
    let (samples, source) = training_samples(ctx, a.synthetic, a.samples, make_synthetic_translations)?;
    let holdout = a.holdout.or(ctx.file.holdout);
    ctx.record(
        "train-tracker",
        json!({ "data": source, "holdout": holdout, "train": config, "architecture": arch }),
    )?;
    let mut params = Network::init(&arch, ctx.seed);
    let log = deeppt::tracker::train_tracker(&mut params, &samples, &config)?;
    params.save(&ctx.path("weights.dpt"))?;
    write_json(&ctx.path("loss.json"), &log)?;
    let mut metrics = json!({
        "samples": samples.len(),
        "first_epoch_loss": log.first().map(|l| l.mean_loss),
        "final_epoch_loss": log.last().map(|l| l.mean_loss),
    });
    if let Some(n) = holdout.filter(|&n| n > 0) {
        let test = make_synthetic_translations(n, !ctx.seed);
        let acc = pixel_accuracy(&predictions(&params, &test)?, &DEFAULT_THRESHOLDS)?;
        log::info!("held-out accuracy at 1/2/3 px: {acc:?}");
        metrics["holdout"] = json!({ "count": n, "thresholds": DEFAULT_THRESHOLDS, "accuracy": acc });
    }
    write_json(&ctx.path("metrics.json"), &metrics)
}

fn train_score(ctx: &Ctx, a: TrainScoreArgs) -> Result<()> {
    let (weights, mut params) = required_weights(ctx, a.weights, "train-score")?;
    let config = train_config(ctx, &a.train, TrainConfig::score_head())?;
    let max_pairs = a.max_pairs.or(ctx.file.max_pairs);
    let (pairs, source) = if let Some(n) = a.synthetic.or(ctx.file.synthetic) {
        let samples = make_synthetic_translations(n, ctx.seed);
        (make_match_pairs(&samples, ctx.seed)?, json!({ "synthetic": n }))
    } else {
        let dir = existing_path(a.ubc, ctx.file.ubc.clone(), Some("ubc"), "ubc")?;
        let match_file = a.match_file.or_else(|| ctx.file.match_file.clone());
        (
            ubc_pairs(&dir, match_file.as_deref(), max_pairs)?,
            json!({ "ubc": dir, "match_file": match_file, "max_pairs": max_pairs }),
        )
    };
    ctx.record("train-score", json!({ "weights": weights, "data": source, "train": config }))?;
    let log = train_score_head(&mut params, &pairs, &config)?;
    params.save(&ctx.path("weights.dpt"))?;
    write_json(&ctx.path("loss.json"), &log)?;
    let scores = pairs
        .par_iter()
        .map(|p| pair_match_score(&params, p))
        .collect::<deeppt::Result<Vec<_>>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.matching).collect();
    write_json(
        &ctx.path("metrics.json"),
        &json!({
            "pairs": pairs.len(),
            "final_epoch_loss": log.last().map(|l| l.mean_loss),
            "train_error_at_95_recall": error_at_95_recall(&scores, &labels).ok(),
        }),
    )
}

fn ubc_pairs(dir: &Path, match_file: Option<&str>, max_pairs: Option<usize>) -> Result<Vec<LabeledPair>> {
    let data = parse_ubc_dataset(dir, match_file).with_context(|| format!("loading {}", dir.display()))?;
    let n = max_pairs.unwrap_or(usize::MAX).min(data.pairs().len());
    data.pairs()[..n]
        .par_iter()
        .map(|&p| LabeledPair::from_patch_pair(&data.pair(p)?))
        .collect::<deeppt::Result<Vec<_>>>()
        .map_err(Into::into)
}

fn train_detector(ctx: &Ctx, a: TrainDetectorArgs) -> Result<()> {
    let (weights, mut params) = required_weights(ctx, a.weights, "train-detector")?;
    let config = train_config(ctx, &a.train, TrainConfig::score_head())?;
    let (samples, source) = training_samples(ctx, a.synthetic, a.samples, |n, seed| {
        make_mixed_contrast_translations(n, seed, 0.5, LOW_CONTRAST)
    })?;
    ctx.record("train-detector", json!({ "weights": weights, "data": source, "train": config }))?;
    let (labels, stats) = generate_detector_labels(&params, &samples, ctx.seed)?;
    log::info!(
        "labels: {} positive, {} negative before balancing; {} kept",
        stats.positives,
        stats.negatives,
        labels.len()
    );
    // Every fifth labeled point is held out.
    let (test, train): (Vec<_>, Vec<_>) = labels.into_iter().enumerate().partition(|(i, _)| i % 5 == 4);
    let train: Vec<_> = train.into_iter().map(|(_, l)| l).collect();
    let test: Vec<_> = test.into_iter().map(|(_, l)| l).collect();
    let log = train_detector_head(&mut params, &train, &config)?;
    params.save(&ctx.path("weights.dpt"))?;
    write_json(&ctx.path("loss.json"), &log)?;
    let correct = test
        .par_iter()
        .map(|p| {
            let s = trackability_score(&params.detector_head, &point_feature(&params, &p.template)?)?;
            Ok(((s >= 0.5) == p.positive) as usize)
        })
        .collect::<deeppt::Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    write_json(
        &ctx.path("metrics.json"),
        &json!({
            "positives_before_balancing": stats.positives,
            "negatives_before_balancing": stats.negatives,
            "degenerate": stats.degenerate,
            "train_points": train.len(),
            "holdout_points": test.len(),
            "holdout_accuracy": (!test.is_empty()).then(|| correct as f64 / test.len() as f64),
            "final_epoch_loss": log.last().map(|l| l.mean_loss),
        }),
    )
}

#[derive(Debug, Default, Serialize)]
struct GenStats {
    pairs: usize,
    considered: usize,
    invalid_flow: usize,
    too_far: usize,
    out_of_bounds: usize,
    emitted: usize,
}

impl GenStats {
    fn add(&mut self, s: &SampleStats) {
        self.pairs += 1;
        self.considered += s.considered;
        self.invalid_flow += s.invalid_flow;
        self.too_far += s.too_far;
        self.out_of_bounds += s.out_of_bounds;
        self.emitted += s.emitted;
    }
}

struct HarrisSettings {
    threshold: f64,
    nms_radius: usize,
}

/// Both frames plus samples tagged with the corner they came from.
type PairSamples = (GrayImage, GrayImage, Vec<((usize, usize), TrackingSample)>, SampleStats);

/// Samples around the Harris corners of one KITTI pair.
fn kitti_pair_samples(
    pair: &deeppt::datasets::KittiPair,
    harris: &HarrisSettings,
    max: usize,
) -> Result<PairSamples> {
    let a = load_gray_image(&pair.frame_t)?;
    let b = load_gray_image(&pair.frame_t1)?;
    let flow = decode_kitti_flow(&pair.flow)?;
    let corners = harris_corners(&a, DEFAULT_K, harris.threshold, harris.nms_radius);
    let mut stats = SampleStats::default();
    let mut out = Vec::new();
    for c in &corners {
        if out.len() >= max {
            break;
        }
        let (s, st) = generate_tracking_samples(&a, &b, &flow, std::slice::from_ref(c), 1)?;
        stats.considered += st.considered;
        stats.invalid_flow += st.invalid_flow;
        stats.too_far += st.too_far;
        stats.out_of_bounds += st.out_of_bounds;
        stats.emitted += st.emitted;
        out.extend(s.into_iter().map(|s| ((c.x, c.y), s)));
    }
    Ok((a, b, out, stats))
}

fn kitti_pairs(ctx: &Ctx, flag: Option<PathBuf>, max_pairs: Option<usize>) -> Result<(PathBuf, Vec<deeppt::datasets::KittiPair>)> {
    let root = existing_path(flag, ctx.file.kitti.clone(), Some("kitti"), "kitti")?;
    let mut pairs = find_kitti_pairs(&root)?;
    if pairs.is_empty() {
        return Err(anyhow!("{}: no complete frame pairs found", root.display()));
    }
    pairs.truncate(max_pairs.unwrap_or(usize::MAX));
    Ok((root, pairs))
}

fn gen_samples(ctx: &Ctx, a: GenSamplesArgs) -> Result<()> {
    let max_pairs = a.max_pairs.or(ctx.file.max_pairs);
    let (root, pairs) = kitti_pairs(ctx, a.kitti, max_pairs)?;
    let harris = HarrisSettings {
        threshold: a.harris_threshold.or(ctx.file.harris_threshold).unwrap_or(DEFAULT_THRESHOLD),
        nms_radius: a.harris_nms_radius.or(ctx.file.harris_nms_radius).unwrap_or(DEFAULT_NMS_RADIUS),
    };
    let max = a.max_per_pair.or(ctx.file.max_per_pair).unwrap_or(DEFAULT_MAX_PER_PAIR);
    ctx.record(
        "gen-samples",
        json!({
            "kitti": root, "pairs": pairs.len(), "max_per_pair": max,
            "harris_threshold": harris.threshold, "harris_nms_radius": harris.nms_radius,
        }),
    )?;
    let per_pair = pairs
        .par_iter()
        .map(|p| kitti_pair_samples(p, &harris, max).map(|(_, _, s, st)| (s, st)))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = GenStats::default();
    let mut samples = Vec::new();
    for (s, st) in per_pair {
        stats.add(&st);
        samples.extend(s.into_iter().map(|(_, s)| s));
    }
    write_samples(&ctx.path("samples.dpts"), &samples)?;
    log::info!("{} samples from {} pairs", samples.len(), stats.pairs);
    write_json(&ctx.path("stats.json"), &stats)
}

fn gen_synthetic(ctx: &Ctx, a: GenSyntheticArgs) -> Result<()> {
    let count = a.count.or(ctx.file.count).unwrap_or(DEFAULT_SYNTHETIC_COUNT);
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    ctx.record("gen-synthetic", json!({ "count": count }))?;
    write_samples(&ctx.path("samples.dpts"), &make_synthetic_translations(count, ctx.seed))?;
    Ok(())
}

fn list_frames(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| ["png", "pgm", "ppm", "pnm", "bmp"].contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    if paths.len() < 2 {
        return Err(usage(format!("{} holds {} frames; at least 2 are needed", dir.display(), paths.len())));
    }
    paths
        .iter()
        .map(|p| load_gray_image(p).map_err(Into::into))
        .collect()
}

fn pipeline_config(ctx: &Ctx, a: &TrackArgs) -> Result<PipelineConfig> {
    let mut c = ctx.file.pipeline.clone().unwrap_or_default();
    macro_rules! set {
        ($($f:ident),*) => {$( if let Some(v) = a.$f { c.$f = v; } )*};
    }
    set!(min_live, score_threshold, detect_threshold, max_tracks, nms_radius, scan_stride);
    c.validate()?;
    Ok(c)
}

fn track(ctx: &Ctx, a: TrackArgs) -> Result<()> {
    let dir = existing_path(a.frames.clone(), ctx.file.frames.clone(), None, "frames")?;
    let method = a.method.clone().or_else(|| ctx.file.method.clone()).unwrap_or_else(|| "network".into());
    let config = pipeline_config(ctx, &a)?;
    let overlays = !a.no_overlays && ctx.file.overlays.unwrap_or(true);
    let frames = list_frames(&dir)?;
    match method.as_str() {
        "network" => {
            let (weights, params) = required_weights(ctx, a.weights, "track")?;
            ctx.record(
                "track",
                json!({ "frames": dir, "method": method, "weights": weights, "pipeline": config, "overlays": overlays }),
            )?;
            let result = run_sequence(&frames, &params, &config)?;
            let table = format_track_table(&result.state);
            std::fs::write(ctx.path("tracks.txt"), &table)?;
            write_json(&ctx.path("steps.json"), &json!({ "initial": result.initial, "steps": result.steps }))?;
            if overlays {
                save_overlays(&frames, &result.state, &ctx.path("overlays"))?;
            }
            print!("{}", table.lines().last().unwrap_or_default().to_owned() + "\n");
        }
        "klt" => {
            let lk = ctx.file.lk.unwrap_or_default();
            ctx.record(
                "track",
                json!({ "frames": dir, "method": method, "lk": lk, "levels": LK_LEVELS, "max_tracks": config.max_tracks }),
            )?;
            let points: Vec<(f64, f64)> = harris_corners(&frames[0], DEFAULT_K, DEFAULT_THRESHOLD, config.nms_radius)
                .into_iter()
                .map(|c| (c.x as f64, c.y as f64))
                .take(config.max_tracks)
                .collect();
            let pyr = Pyramid::<f32>::from_gray(&frames[0], LK_LEVELS)?;
            let points: Vec<(f64, f64)> = points.into_iter().filter(|&p| inside_lk_margins(&pyr, p, lk.window)).collect();
            let tracks = klt_track_sequence(&frames, &points, LK_LEVELS, &lk)?;
            let table = format_klt_table(&tracks, frames.len());
            std::fs::write(ctx.path("tracks.txt"), &table)?;
            print!("{}", table.lines().last().unwrap_or_default().to_owned() + "\n");
        }
        other => return Err(usage(format!("unknown --method {other:?}; use network or klt"))),
    }
    Ok(())
}

fn eval_kitti(ctx: &Ctx, a: EvalKittiArgs) -> Result<()> {
    let (weights, params) = required_weights(ctx, a.weights, "eval-kitti")?;
    let thresholds = a
        .thresholds
        .map(|l| l.0)
        .or_else(|| ctx.file.thresholds.clone())
        .unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
    let max_points = a.max_points.or(ctx.file.max_points).unwrap_or(usize::MAX);
    let mut rows = Vec::new();
    if let Some(path) = optional_existing(a.samples, ctx.file.samples.clone(), "samples")? {
        ctx.record(
            "eval-kitti",
            json!({ "weights": weights, "samples": path, "thresholds": thresholds, "max_points": max_points }),
        )?;
        let mut samples = read_samples(&path)?;
        samples.truncate(max_points);
        let acc = pixel_accuracy(&predictions(&params, &samples)?, &thresholds)?;
        rows.push(AccuracyRow {
            method: "network tracker".into(),
            count: samples.len(),
            accuracy: acc.iter().map(|a| 100.0 * a).collect(),
        });
    } else {
        let max_pairs = a.max_pairs.or(ctx.file.max_pairs);
        let (root, pairs) = kitti_pairs(ctx, a.kitti, max_pairs)?;
        let max = a.max_per_pair.or(ctx.file.max_per_pair).unwrap_or(DEFAULT_MAX_PER_PAIR);
        let lk = ctx.file.lk.unwrap_or_default();
        ctx.record(
            "eval-kitti",
            json!({
                "weights": weights, "kitti": root, "pairs": pairs.len(), "max_per_pair": max,
                "max_points": max_points, "thresholds": thresholds, "lk": lk, "levels": LK_LEVELS,
            }),
        )?;
        let harris = HarrisSettings {
            threshold: DEFAULT_THRESHOLD,
            nms_radius: DEFAULT_NMS_RADIUS,
        };
        let mut net = Vec::new();
        let mut klt = Vec::new();
        let mut klt_unreliable = 0usize;
        'pairs: for pair in &pairs {
            let (fa, fb, samples, _) = kitti_pair_samples(pair, &harris, max)?;
            let pa = Pyramid::<f32>::from_gray(&fa, LK_LEVELS)?;
            let pb = Pyramid::<f32>::from_gray(&fb, LK_LEVELS)?;
            for ((x, y), s) in samples {
                if net.len() >= max_points {
                    break 'pairs;
                }
                let gt = s.displacement();
                let gt = (gt.dx as f64, gt.dy as f64);
                let (d, _) = track_patch(&params, &s.template_tensor(), &s.search_tensor())?;
                net.push(PredictionRecord { pred: (d.dx as f64, d.dy as f64), gt });
                let p = (x as f64, y as f64);
                let r = inside_lk_margins(&pa, p, lk.window)
                    .then(|| fb_track(&pa, &pb, p, &lk))
                    .transpose()?;
                match r {
                    Some(r) if r.reliable => klt.push(PredictionRecord { pred: (r.point.0 - p.0, r.point.1 - p.1), gt }),
                    _ => klt_unreliable += 1,
                }
            }
        }
        let acc = pixel_accuracy(&net, &thresholds)?;
        rows.push(AccuracyRow {
            method: "network tracker".into(),
            count: net.len(),
            accuracy: acc.iter().map(|a| 100.0 * a).collect(),
        });
        // Unreliable KLT points count as failures.
        let total = klt.len() + klt_unreliable;
        let klt_acc = if klt.is_empty() {
            vec![0.0; thresholds.len()]
        } else {
            pixel_accuracy(&klt, &thresholds)?
        };
        rows.push(AccuracyRow {
            method: "forward-backward KLT".into(),
            count: total,
            accuracy: klt_acc.iter().map(|a| 100.0 * a * klt.len() as f64 / total as f64).collect(),
        });
    }
    let report = AccuracyReport {
        thresholds,
        rows,
        reference: reference::TRACKING_ACCURACY.to_vec(),
    };
    let text = report.to_text();
    std::fs::write(ctx.path("report.txt"), &text)?;
    write_json(&ctx.path("report.json"), &report)?;
    print!("{text}");
    Ok(())
}

fn eval_ubc(ctx: &Ctx, a: EvalUbcArgs) -> Result<()> {
    let (weights, params) = required_weights(ctx, a.weights, "eval-ubc")?;
    let dir = existing_path(a.ubc, ctx.file.ubc.clone(), Some("ubc"), "ubc")?;
    let match_file = a.match_file.or_else(|| ctx.file.match_file.clone());
    let max_pairs = a.max_pairs.or(ctx.file.max_pairs);
    let train_set = a
        .train_set
        .or_else(|| ctx.file.train_set.clone())
        .unwrap_or_else(|| "unspecified".into());
    ctx.record(
        "eval-ubc",
        json!({ "weights": weights, "ubc": dir, "match_file": match_file, "max_pairs": max_pairs, "train_set": train_set }),
    )?;
    let pairs = ubc_pairs(&dir, match_file.as_deref(), max_pairs)?;
    let scores = pairs
        .par_iter()
        .map(|p| pair_match_score(&params, p))
        .collect::<deeppt::Result<Vec<_>>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.matching).collect();
    let report = MatchingReport {
        train_set,
        test_set: dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        pairs: pairs.len(),
        error_at_95_recall: error_at_95_recall(&scores, &labels)?,
        reference: reference::MATCHING.to_vec(),
    };
    let text = report.to_text();
    std::fs::write(ctx.path("report.txt"), &text)?;
    write_json(&ctx.path("report.json"), &report)?;
    print!("{text}");
    Ok(())
}

fn eval_backproj(ctx: &Ctx, a: EvalBackprojArgs) -> Result<()> {
    let corr = existing_path(a.correspondences, ctx.file.correspondences.clone(), None, "correspondences")?;
    let hdir = existing_path(a.homographies, ctx.file.homographies.clone(), None, "homographies")?;
    let threshold = a
        .inlier_threshold
        .or(ctx.file.inlier_threshold)
        .unwrap_or(DEFAULT_INLIER_THRESHOLD);
    ctx.record(
        "eval-backproj",
        json!({ "correspondences": corr, "homographies": hdir, "inlier_threshold": threshold }),
    )?;
    let text = std::fs::read_to_string(&corr).with_context(|| format!("reading {}", corr.display()))?;
    let report = backprojection_report(&parse_correspondences(&text)?, &load_homographies(&hdir)?, threshold)?;
    let text = report.to_text("measured");
    std::fs::write(ctx.path("report.txt"), &text)?;
    write_json(
        &ctx.path("report.json"),
        &json!({ "measured": report, "reference": reference::BACKPROJECTION }),
    )?;
    print!("{text}");
    Ok(())
}

fn visualize(ctx: &Ctx, a: VisualizeArgs) -> Result<()> {
    let dir = existing_path(a.frames, ctx.file.frames.clone(), None, "frames")?;
    let tracks = existing_path(a.tracks, ctx.file.tracks.clone(), None, "tracks")?;
    ctx.record("visualize", json!({ "frames": dir, "tracks": tracks }))?;
    let frames = list_frames(&dir)?;
    let text = std::fs::read_to_string(&tracks).with_context(|| format!("reading {}", tracks.display()))?;
    let state = parse_track_table(&text)?;
    let written = save_overlays(&frames, &state, &ctx.path("overlays"))?;
    log::info!("{} overlays written", written.len());
    Ok(())
}
