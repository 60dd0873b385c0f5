//! Acceptance suite. Each test checks one criterion and writes a single
//! `[PASS]` / `[FAIL]` / `[SKIP]` line straight to stderr, so the lines show
//! up even when libtest captures output.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use deeppt::datasets::harris::{DEFAULT_K, DEFAULT_NMS_RADIUS, DEFAULT_THRESHOLD};
use deeppt::datasets::{
    decode_kitti_flow, find_kitti_pairs, generate_tracking_samples, harris_corners, load_gray_image,
    make_mixed_contrast_translations, make_synthetic_translations, GrayImage,
};
use deeppt::eval::{
    apply_homography, backprojection_report, error_at_95_recall, pixel_accuracy, reference, Correspondence,
    Homography, PredictionRecord,
};
use deeppt::heads::{make_match_pairs, train_detector_head, train_score_head, LabeledPoint};
use deeppt::klt::{build_pyramid, fb_track, LkParams, Plane};
use deeppt::nn::{softmax_cross_entropy, ConvLayerParams, DenseLayerParams, Layer, Sequential, TrainConfig};
use deeppt::pipeline::{detect_points, initialize_tracks, track_step, PipelineConfig, PointModel, TrackStatus};
use deeppt::tracker::{
    extract_search_features, extract_template_features, read_samples, track_patch, train_tracker, write_samples,
    Architecture, Displacement, NetworkParams, CELLS,
};
use deeppt::{Error, Tensor32};

fn report(criterion: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "\n[{}] {criterion}: {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn skip(criterion: &str, why: &str) {
    let _ = std::io::stderr().write_all(format!("\n[SKIP] {criterion}: {why}\n").as_bytes());
}

// ---------------------------------------------------------------- gradients

fn tiny_net(rng: &mut ChaCha8Rng) -> (Sequential<f64>, usize, usize) {
    loop {
        let c1 = rng.gen_range(1..=3);
        let c2 = rng.gen_range(1..=3);
        let side = rng.gen_range(5..=7);
        let classes = rng.gen_range(2..=4);
        let inner = side - 4;
        let mut conv1 = ConvLayerParams::he_init(1, c1, rng);
        let mut conv2 = ConvLayerParams::he_init(c1, c2, rng);
        let mut dense = DenseLayerParams::he_init(c2 * inner * inner, classes, rng);
        for b in conv1.biases.iter_mut().chain(&mut conv2.biases).chain(&mut dense.biases) {
            *b = rng.gen_range(-0.1..0.1);
        }
        let net = Sequential::new(vec![Layer::Conv(conv1), Layer::Relu, Layer::Conv(conv2), Layer::Dense(dense)]);
        if net.param_count() <= 500 {
            return (net, side, classes);
        }
    }
}

fn net_loss(net: &Sequential<f64>, x: &deeppt::nn::Tensor<f64>, target: &[f64]) -> f64 {
    softmax_cross_entropy(net.forward(x).unwrap().data(), target).unwrap().loss
}

#[test]
fn gradient_oracle() {
    let start = Instant::now();
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (net, side, classes) = tiny_net(&mut rng);
        let x = deeppt::nn::Tensor::from_fn(&[1, side, side], |_| rng.gen_range(-1.0..1.0));
        let mut target = vec![0.0; classes];
        target[rng.gen_range(0..classes)] = 1.0;
        let (out, cache) = net.forward_cached(&x).unwrap();
        let lg = softmax_cross_entropy(out.data(), &target).unwrap();
        let (grads, _) = net.backward(&cache, &lg.grad, &[], false).unwrap();
        for (slot, g) in grads.0.iter().enumerate() {
            for (j, &analytic) in g.iter().enumerate() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.param_slices_mut()[slot][j] += h;
                minus.param_slices_mut()[slot][j] -= h;
                let numeric = (net_loss(&plus, &x, &target) - net_loss(&minus, &x, &target)) / (2.0 * h);
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    report(
        "gradient oracle",
        worst < 1e-4,
        format!(
            "20 nets, {checked} parameters, worst relative error {worst:.2e} (< 1e-4) in {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- convolution

fn naive_conv(layer: &ConvLayerParams<f64>, x: &deeppt::nn::Tensor<f64>) -> Vec<f64> {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cout = layer.biases.len();
    let (oh, ow) = (h - 2, w - 2);
    let k = layer.kernels.data();
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = layer.biases[o];
                for i in 0..cin {
                    for kr in 0..3 {
                        for kc in 0..3 {
                            acc += k[((o * cin + i) * 3 + kr) * 3 + kc] * x.data()[(i * h + r + kr) * w + c + kc];
                        }
                    }
                }
                out[(o * oh + r) * ow + c] = acc;
            }
        }
    }
    out
}

#[test]
fn convolution_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + case);
        let cin = rng.gen_range(1..=8);
        let cout = rng.gen_range(1..=8);
        let (h, w) = (rng.gen_range(3..=24), rng.gen_range(3..=24));
        let mut layer = ConvLayerParams::<f64>::he_init(cin, cout, &mut rng);
        for b in &mut layer.biases {
            *b = rng.gen_range(-0.5..0.5);
        }
        let x = deeppt::nn::Tensor::from_fn(&[cin, h, w], |_| rng.gen_range(-1.0..1.0));
        let fast = layer.forward(&x).unwrap();
        let slow = naive_conv(&layer, &x);
        let diff = fast.data().iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    report(
        "convolution equivalence",
        worst <= 1e-6,
        format!("50 cases, max abs diff {worst:.2e} (<= 1e-6) in {:.2}s", start.elapsed().as_secs_f64()),
    );
}

// ---------------------------------------------------------------- shape law

#[test]
fn shape_law() {
    let params = NetworkParams::<f32>::init(&Architecture::default(), 3);
    let t = params.conv.forward(&Tensor32::zeros(&[1, 19, 19])).unwrap();
    let s = params.conv.forward(&Tensor32::zeros(&[1, 55, 55])).unwrap();
    let pass = t.shape() == [128, 1, 1] && s.shape() == [128, 37, 37];
    report(
        "shape law",
        pass,
        format!("19x19 -> {:?}, 55x55 -> {:?}", t.shape(), s.shape()),
    );
}

// ---------------------------------------------------------------- training

struct Trained {
    params: NetworkParams<f32>,
    first_loss: f64,
    final_loss: f64,
    acc1: f64,
    acc3: f64,
    seconds: f64,
}

fn desk_arch() -> Architecture {
    Architecture {
        widths: [1, 8, 8, 8, 8, 16, 16, 16, 16, 16],
        score_hidden: [64, 32],
        detector_hidden: 16,
    }
}

fn records(params: &NetworkParams<f32>, samples: &[deeppt::tracker::TrackingSample]) -> Vec<PredictionRecord> {
    samples
        .iter()
        .map(|s| {
            let (d, _) = track_patch(params, &s.template_tensor(), &s.search_tensor()).unwrap();
            let gt = s.displacement();
            PredictionRecord {
                pred: (d.dx as f64, d.dy as f64),
                gt: (gt.dx as f64, gt.dy as f64),
            }
        })
        .collect()
}

/// The desk-scale tracker, trained once and shared by the tests that need it.
fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let train = make_synthetic_translations(2000, 1);
        let test = make_synthetic_translations(500, 2);
        let mut params = NetworkParams::<f32>::init(&desk_arch(), 0);
        let config = TrainConfig {
            epochs: 20,
            base_lr: 1e-3,
            batch_size: 32,
            ..TrainConfig::tracker()
        };
        let log = train_tracker(&mut params, &train, &config).unwrap();
        let acc = pixel_accuracy(&records(&params, &test), &[1.0, 3.0]).unwrap();
        Trained {
            params,
            first_loss: log[0].mean_loss,
            final_loss: log.last().unwrap().mean_loss,
            acc1: acc[0],
            acc3: acc[1],
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn desk_scale_training() {
    let t = trained();
    let pass = t.acc1 >= 0.90 && t.acc3 >= 0.97 && t.final_loss < t.first_loss;
    report(
        "desk-scale training",
        pass,
        format!(
            "held-out 1-px {:.1}% (>= 90), 3-px {:.1}% (>= 97); floors {:.2}% / {:.2}%; loss {:.3} -> {:.3}; {:.0}s",
            100.0 * t.acc1,
            100.0 * t.acc3,
            100.0 / CELLS as f64,
            100.0 * 29.0 / CELLS as f64,
            t.first_loss,
            t.final_loss,
            t.seconds
        ),
    );
}

// ---------------------------------------------------------------- crop consistency

#[test]
fn crop_consistency() {
    let start = Instant::now();
    let arch = Architecture::default();
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + case);
        // A fresh random network every ten cases keeps the runtime small.
        let params = NetworkParams::<f64>::init(&arch, 3000 + case / 10);
        let search = deeppt::nn::Tensor::<f64>::from_fn(&[1, 55, 55], |_| rng.gen_range(-0.5..0.5));
        let (dx, dy) = (rng.gen_range(-18..=18i32), rng.gen_range(-18..=18i32));
        let (r0, c0) = ((18 + dy) as usize, (18 + dx) as usize);
        let crop = deeppt::nn::Tensor::<f64>::from_fn(&[1, 19, 19], |i| {
            search.data()[(r0 + i / 19) * 55 + c0 + i % 19]
        });
        let map = extract_search_features(&params, &search).unwrap();
        let feat = extract_template_features(&params, &crop).unwrap();
        let cell = map.cell(r0, c0);
        let diff = cell.iter().zip(&feat.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    report(
        "crop consistency",
        worst <= 1e-5,
        format!("100 patches, max abs diff {worst:.2e} (<= 1e-5) in {:.1}s", start.elapsed().as_secs_f64()),
    );
}

// ---------------------------------------------------------------- LK baseline

fn texture(rng: &mut ChaCha8Rng) -> impl Fn(f64, f64) -> f64 {
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let period = rng.gen_range(9.0..24.0);
            let k = 2.0 * std::f64::consts::PI / period;
            (k * angle.cos(), k * angle.sin(), rng.gen_range(0.0..6.3), rng.gen_range(10.0..22.0))
        })
        .collect();
    move |x, y| 128.0 + waves.iter().map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin()).sum::<f64>()
}

#[test]
fn lk_baseline() {
    let start = Instant::now();
    let params = LkParams::default();
    let mut ok = 0;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + case);
        let f = texture(&mut rng);
        let r = rng.gen_range(0.0..6.0);
        let a = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let (dx, dy) = (r * a.cos(), r * a.sin());
        let a_plane = Plane::<f32>::from_fn(96, 96, |x, y| f(x as f64, y as f64) as f32);
        let b_plane = Plane::<f32>::from_fn(96, 96, |x, y| f(x as f64 - dx, y as f64 - dy) as f32);
        let pa = build_pyramid(a_plane, 3).unwrap();
        let pb = build_pyramid(b_plane, 3).unwrap();
        let p = (48.0, 48.0);
        let res = fb_track(&pa, &pb, p, &params).unwrap();
        let err = ((res.point.0 - p.0 - dx).powi(2) + (res.point.1 - p.1 - dy).powi(2)).sqrt();
        if res.reliable && err <= 0.5 && res.fb_error < 0.1 {
            ok += 1;
        }
    }
    report(
        "LK baseline",
        ok >= 95,
        format!(
            "{ok}/100 translations up to 6 px recovered within 0.5 px with fb error < 0.1 (need 95) in {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- metrics

fn sweep(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut best: Option<(f64, f64)> = None;
    for &t in scores {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= t).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64;
        if tp / pos >= 0.95 && best.is_none_or(|(bt, _)| t > bt) {
            best = Some((t, 100.0 * fp / neg));
        }
    }
    best.unwrap().1
}

#[test]
fn metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let mut recall_ok = 0;
    for case in 0..50 {
        let n = rng.gen_range(2..300);
        let levels = if case % 2 == 0 { 5 } else { 100_000 };
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| rng.gen_range(0..levels) as f64 / levels as f64 + if l { 0.3 } else { 0.0 })
            .collect();
        recall_ok += (error_at_95_recall(&scores, &labels).unwrap() == sweep(&scores, &labels)) as usize;
    }

    let mut acc_ok = 0;
    for _ in 0..50 {
        let recs: Vec<PredictionRecord> = (0..rng.gen_range(1..100))
            .map(|_| PredictionRecord {
                pred: (rng.gen_range(-20..=20) as f64, rng.gen_range(-20..=20) as f64),
                gt: (rng.gen_range(-20..=20) as f64, rng.gen_range(-20..=20) as f64),
            })
            .collect();
        let th = [1.0, 2.0, 3.0, 5.5];
        let got = pixel_accuracy(&recs, &th).unwrap();
        let direct: Vec<f64> = th
            .iter()
            .map(|&t| {
                let hits = recs
                    .iter()
                    .filter(|r| ((r.pred.0 - r.gt.0).powi(2) + (r.pred.1 - r.gt.1).powi(2)) <= t * t)
                    .count();
                hits as f64 / recs.len() as f64
            })
            .collect();
        acc_ok += (got == direct) as usize;
    }

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let scale = if i == 2 && j < 2 { 1e-3 } else { 1.0 };
                *v = if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3) * scale;
            }
        }
        let p = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let v = [p.0, p.1, 1.0];
        let r: Vec<f64> = (0..3).map(|i| (0..3).map(|j| m[i][j] * v[j]).sum()).collect();
        let a = apply_homography(&Homography::new(m).unwrap(), p).unwrap();
        worst = worst.max((a.0 - r[0] / r[2]).abs()).max((a.1 - r[1] / r[2]).abs());
    }

    report(
        "metric oracles",
        recall_ok == 50 && acc_ok == 50 && worst <= 1e-9,
        format!(
            "error@95 {recall_ok}/50 exact, pixel accuracy {acc_ok}/50 exact, homography max diff {worst:.1e} (<= 1e-9)"
        ),
    );
}

// ---------------------------------------------------------------- freeze

fn conv_hash(params: &NetworkParams<f32>) -> String {
    let mut h = Sha256::new();
    for s in params.conv.param_slices() {
        for v in s {
            h.update(v.to_le_bytes());
        }
    }
    format!("{:x}", h.finalize())
}

fn small_arch() -> Architecture {
    Architecture {
        widths: [1, 4, 4, 4, 4, 4, 4, 4, 4, 6],
        score_hidden: [16, 8],
        detector_hidden: 8,
    }
}

#[test]
fn freeze_contract() {
    let mut params = NetworkParams::<f32>::init(&small_arch(), 11);
    let before = conv_hash(&params);
    let config = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::score_head()
    };
    let samples = make_synthetic_translations(24, 12);
    let pairs = make_match_pairs(&samples, 12).unwrap();
    let score_before = params.score_head.clone();
    train_score_head(&mut params, &pairs, &config).unwrap();
    let after_score = conv_hash(&params);

    let mixed = make_mixed_contrast_translations(24, 13, 0.5, 0.03);
    let points: Vec<LabeledPoint> = mixed
        .iter()
        .enumerate()
        .map(|(i, s)| LabeledPoint {
            sample: i,
            template: s.template().to_vec(),
            positive: i % 2 == 0,
        })
        .collect();
    let detector_before = params.detector_head.clone();
    train_detector_head(&mut params, &points, &config).unwrap();
    let after_detector = conv_hash(&params);

    let heads_moved = params.score_head != score_before && params.detector_head != detector_before;
    report(
        "freeze contract",
        before == after_score && before == after_detector && heads_moved,
        format!(
            "conv sha256 {}.. unchanged after score head ({}) and detector head ({}) training; heads updated: {heads_moved}",
            &before[..12],
            before == after_score,
            before == after_detector
        ),
    );
}

// ---------------------------------------------------------------- pipeline

fn mix(mut a: u64) -> u64 {
    a ^= a >> 33;
    a = a.wrapping_mul(0xff51afd7ed558ccd);
    a ^= a >> 33;
    a = a.wrapping_mul(0xc4ceb9fe1a85ec53);
    a ^ (a >> 33)
}

fn unit(a: u64) -> f64 {
    (mix(a) >> 11) as f64 / (1u64 << 53) as f64
}

/// Detector and tracker outputs are pure functions of the seed, the frame
/// tag at pixel (0, 0) and the position.
struct Scripted {
    seed: u64,
    drop_rate: f64,
}

impl PointModel for Scripted {
    fn trackability(&self, frame: &GrayImage, x: usize, y: usize) -> deeppt::Result<f64> {
        Ok(unit(self.seed ^ mix(frame.get(0, 0) as u64 * 1_000_003 + (y * 4096 + x) as u64)))
    }

    fn track(&self, frame_t: &GrayImage, _f: &GrayImage, x: usize, y: usize) -> deeppt::Result<(Displacement, f64)> {
        let key = mix(self.seed.wrapping_add(7) ^ (frame_t.get(0, 0) as u64) << 40 ^ (y * 4096 + x) as u64);
        let dx = (mix(key) % 7) as i32 - 3;
        let dy = (mix(key + 1) % 7) as i32 - 3;
        let score = if unit(key + 2) < self.drop_rate { 0.1 } else { 0.9 };
        Ok((Displacement::new(dx, dy), score))
    }
}

#[test]
fn pipeline_behavior() {
    let start = Instant::now();
    let mut steps = 0;
    let mut redetections = 0;
    let mut violations = Vec::new();
    for case in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + case);
        let min_live = rng.gen_range(2..20);
        let config = PipelineConfig {
            min_live,
            max_tracks: min_live + rng.gen_range(0..20),
            nms_radius: rng.gen_range(2..8),
            scan_stride: rng.gen_range(2..5),
            detect_threshold: rng.gen_range(0.5..0.95),
            ..PipelineConfig::default()
        };
        let model = Scripted {
            seed: case,
            drop_rate: rng.gen_range(0.0..0.6),
        };
        let frames: Vec<GrayImage> = (0..8u8)
            .map(|t| GrayImage::from_fn(120, 100, |x, y| if x == 0 && y == 0 { t } else { 0 }))
            .collect();
        let mut state = initialize_tracks(&frames[0], &model, &config).unwrap();
        for (t, pair) in frames.windows(2).enumerate() {
            let ended_before: BTreeMap<u64, (TrackStatus, usize)> = state
                .tracks
                .iter()
                .filter(|tr| !tr.is_live())
                .map(|tr| (tr.id, (tr.status(), tr.history().len())))
                .collect();
            let max_id_before = state.tracks.iter().map(|tr| tr.id).max();
            let report = track_step(&mut state, &pair[0], &pair[1], &model, &config).unwrap();
            steps += 1;
            let survivors = report.tracked;
            if survivors < config.min_live {
                redetections += 1;
                let occupied: Vec<(usize, usize)> = state
                    .tracks
                    .iter()
                    .filter(|tr| tr.is_live() && tr.history()[0].frame <= t)
                    .map(|tr| tr.position())
                    .collect();
                let available = detect_points(&pair[1], &model, &config, &occupied, usize::MAX).unwrap().len();
                let expected = available.min(config.max_tracks - survivors);
                if report.added != expected || report.live < config.min_live.min(survivors + available) {
                    violations.push(format!("case {case} step {t}: added {} expected {expected}", report.added));
                }
            } else if report.added != 0 {
                violations.push(format!("case {case} step {t}: re-detected with {survivors} live"));
            }
            let ids: HashSet<u64> = state.tracks.iter().map(|tr| tr.id).collect();
            if ids.len() != state.tracks.len() {
                violations.push(format!("case {case} step {t}: duplicate id"));
            }
            if let Some(m) = max_id_before {
                let new_low = state.tracks.iter().filter(|tr| tr.history()[0].frame == t + 1).any(|tr| tr.id <= m);
                if new_low {
                    violations.push(format!("case {case} step {t}: id reused"));
                }
            }
            for tr in &state.tracks {
                if let Some(&(status, len)) = ended_before.get(&tr.id) {
                    if tr.status() != status || tr.history().len() != len {
                        violations.push(format!("case {case} step {t}: track {} resurrected", tr.id));
                    }
                }
            }
        }
    }
    report(
        "pipeline behavior",
        violations.is_empty() && redetections > 0,
        format!(
            "40 scripted sequences, {steps} steps, {redetections} re-detections restored to min(min_live, candidates), ids unique, no resurrection; {} violations in {:.1}s{}",
            violations.len(),
            start.elapsed().as_secs_f64(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    );
}

// ---------------------------------------------------------------- serialization

#[test]
fn serialization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.dpt");
    let params = NetworkParams::<f32>::init(&small_arch(), 21);
    params.save(&path).unwrap();
    let loaded = NetworkParams::<f32>::load(&path).unwrap();
    let bits = |p: &NetworkParams<f32>| -> Vec<u32> {
        [&p.conv, &p.score_head, &p.detector_head]
            .iter()
            .flat_map(|s| s.param_slices().into_iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    let exact = bits(&params) == bits(&loaded);

    let bytes = std::fs::read(&path).unwrap();
    let corrupt = |mutate: &dyn Fn(&mut Vec<u8>)| -> bool {
        let mut b = bytes.clone();
        mutate(&mut b);
        let p = dir.path().join("bad.dpt");
        std::fs::write(&p, &b).unwrap();
        matches!(NetworkParams::<f32>::load(&p), Err(Error::CorruptFile(_)))
    };
    let mid = bytes.len() / 2;
    let cases = [
        ("flipped byte", corrupt(&|b| b[mid] ^= 0x40)),
        ("truncated", corrupt(&|b| b.truncate(mid))),
        ("bad magic", corrupt(&|b| b[0] = b'X')),
        ("bad checksum", corrupt(&|b| *b.last_mut().unwrap() ^= 1)),
        ("wrong version", corrupt(&|b| b[4] = 9)),
    ];
    let rejected = cases.iter().filter(|c| c.1).count();

    let samples = make_synthetic_translations(10, 3);
    let spath = dir.path().join("s.dpts");
    write_samples(&spath, &samples).unwrap();
    let samples_ok = read_samples(&spath).unwrap() == samples;

    report(
        "serialization",
        exact && rejected == cases.len() && samples_ok,
        format!(
            "weights round trip bit-exact: {exact}; {rejected}/{} corruptions rejected as corrupt files; sample cache round trip: {samples_ok}",
            cases.len()
        ),
    );
}

// ---------------------------------------------------------------- determinism

fn run_cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_deeppt"))
        .current_dir(dir)
        .args(["--threads", "1", "--seed", "7"])
        .args(args)
        .env_remove("DEEPPT_DATA")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success(), "deeppt {args:?} failed in {}", dir.display());
}

fn all_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_chain(root: &Path) {
    let frames = root.join("frames");
    std::fs::create_dir_all(&frames).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let base: Vec<u8> = (0..140 * 110).map(|_| rng.gen()).collect();
    for t in 0..3 {
        GrayImage::from_fn(120, 90, |x, y| base[(y + t) * 140 + x + t])
            .save_png(&frames.join(format!("f{t}.png")))
            .unwrap();
    }
    let tiny = ["--widths", "1,4,4,4,4,4,4,4,4,4", "--score-hidden", "8,8", "--detector-hidden", "8"];
    run_cli(root, &["gen-synthetic", "--count", "40", "--out", "gs"]);
    let mut args = vec!["train-tracker", "--samples", "gs/samples.dpts", "--holdout", "20"];
    args.extend(["--epochs", "2", "--batch-size", "8", "--lr", "0.001", "--out", "t"]);
    args.extend(tiny);
    run_cli(root, &args);
    run_cli(root, &["train-score", "--weights", "t/weights.dpt", "--synthetic", "16", "--epochs", "1", "--out", "s"]);
    run_cli(root, &["train-detector", "--weights", "s/weights.dpt", "--synthetic", "40", "--epochs", "1", "--out", "d"]);
    let mut track = vec!["track", "--frames", "frames", "--weights", "d/weights.dpt", "--out", "tr"];
    track.extend(["--min-live", "5", "--max-tracks", "20", "--detect-threshold", "0.0", "--score-threshold", "0.0"]);
    run_cli(root, &track);
    run_cli(root, &["track", "--frames", "frames", "--method", "klt", "--min-live", "5", "--max-tracks", "20", "--out", "k"]);
    run_cli(root, &["eval-kitti", "--weights", "d/weights.dpt", "--samples", "gs/samples.dpts", "--out", "e"]);
}

#[test]
fn determinism() {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_chain(a.path());
    cli_chain(b.path());
    let fa = all_files(a.path());
    let fb = all_files(b.path());
    let differing: Vec<_> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    report(
        "determinism",
        differing.is_empty() && fa.len() > 20,
        format!(
            "gen-synthetic, train-tracker, train-score, train-detector, track (network and klt), eval-kitti run twice with --threads 1 --seed 7: {} files, {} differ {:?} in {:.1}s",
            fa.len(),
            differing.len(),
            differing,
            start.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- KITTI

#[test]
fn kitti_optional() {
    const NAME: &str = "KITTI check";
    let Some(root) = std::env::var_os("DEEPPT_DATA").map(|d| PathBuf::from(d).join("kitti")) else {
        skip(NAME, "DEEPPT_DATA is not set; KITTI Flow data is optional");
        return;
    };
    let Ok(pairs) = find_kitti_pairs(&root) else {
        skip(NAME, &format!("no KITTI Flow layout under {}", root.display()));
        return;
    };
    let mut samples = Vec::new();
    for pair in &pairs {
        if samples.len() >= 1000 {
            break;
        }
        let a = load_gray_image(&pair.frame_t).unwrap();
        let b = load_gray_image(&pair.frame_t1).unwrap();
        let flow = decode_kitti_flow(&pair.flow).unwrap();
        let corners = harris_corners(&a, DEFAULT_K, DEFAULT_THRESHOLD, DEFAULT_NMS_RADIUS);
        samples.extend(generate_tracking_samples(&a, &b, &flow, &corners, 200).unwrap().0);
    }
    let t = trained();
    let acc3 = pixel_accuracy(&records(&t.params, &samples), &[3.0]).unwrap()[0];
    let floor = 29.0 / CELLS as f64;
    let backproj = backprojection_report(
        &[Correspondence { prev: (0.0, 0.0), curr: (0.0, 0.0), patch: "p".into() }],
        &[("p".to_string(), Homography::identity().matrix())].into(),
        5.0,
    )
    .unwrap()
    .to_text("check");
    let ingested = backproj.contains("2.71 ± 2.81 | 82%")
        && reference::BACKPROJECTION.iter().any(|r| r.method == "network tracker");
    report(
        NAME,
        samples.len() >= 1000 && acc3 >= 10.0 * floor && ingested,
        format!(
            "{} points, 3-px accuracy {:.1}% vs 10x floor {:.1}%; reference rows shown side by side: {ingested}",
            samples.len(),
            100.0 * acc3,
            1000.0 * floor
        ),
    );
}

/// Not a numbered criterion: the desk-trained tracker maps identical frames
/// drawn from its training distribution to zero displacement. The desk net
/// is not exact on every frame (47/50 with these seeds), so the bar is 90%.
#[test]
fn identical_frames_do_not_move() {
    let t = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let mut moved = Vec::new();
    for case in 0..50 {
        let pair = deeppt::datasets::synthetic::make_synthetic_pair_with(&mut rng, Displacement::default());
        assert_eq!(pair.frame_a, pair.frame_b);
        let (x, y) = pair.center;
        let (d, _) = t.params.track(&pair.frame_a, &pair.frame_a, x, y).unwrap();
        if d != Displacement::default() {
            moved.push((case, d));
        }
    }
    assert!(moved.len() <= 5, "{} of 50 moved: {moved:?}", moved.len());
}
