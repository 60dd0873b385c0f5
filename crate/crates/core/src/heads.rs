//! Fully connected heads on top of the frozen tracker.
//!
//! The score head reads the vectorized 37×37 score map and answers "is this
//! correspondence right"; the detector head reads a template feature and
//! answers "will this point track". Both end in a two-class softmax whose
//! class 1 is the positive answer. Training either head never touches the
//! conv stack.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::{center_crop, PatchPair};
use crate::error::{Error, Result};
use crate::nn::{softmax, softmax_cross_entropy, Sequential, Tensor, TrainConfig};
use crate::scalar::Scalar;
use crate::tracker::train::run_epochs;
use crate::tracker::{
    correlate, extract_search_features, extract_template_features, normalize_patch, track_patch,
    Displacement, EpochLog, NetworkParams, ScoreMap, TemplateFeature, TrackingSample, CELLS,
    SEARCH_SIZE, TEMPLATE_SIZE,
};

/// Largest localization error (pixels, Euclidean) still counted as tracked.
pub const TRACKED_TOLERANCE: f64 = 3.0;

fn positive_probability<T: Scalar>(head: &Sequential<T>, input: &[T]) -> Result<f64> {
    let x = Tensor::from_vec(&[input.len()], input.to_vec())?;
    let logits = head.forward(&x)?;
    if logits.len() != 2 {
        return Err(Error::config(format!(
            "head must end in 2 logits, got {}",
            logits.len()
        )));
    }
    Ok(softmax(logits.data())?[1].to_f64_lossy())
}

/// Probability that the correspondence behind `score` is correct.
pub fn match_score<T: Scalar>(head: &Sequential<T>, score: &ScoreMap<T>) -> Result<f64> {
    if score.0.len() != CELLS {
        return Err(Error::rejected("score map must have 1369 cells"));
    }
    positive_probability(head, &score.0)
}

/// Probability that the point behind `feature` can be tracked.
pub fn trackability_score<T: Scalar>(head: &Sequential<T>, feature: &TemplateFeature<T>) -> Result<f64> {
    positive_probability(head, &feature.0)
}

/// Trains a two-class head on fixed input vectors.
pub fn train_classifier<T: Scalar>(
    head: &mut Sequential<T>,
    inputs: &[Vec<T>],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    if inputs.len() != labels.len() {
        return Err(Error::rejected(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        log::warn!(
            "training set has a single class ({positives} of {} positive)",
            labels.len()
        );
    }
    let width = inputs[0].len();
    head.output_shape(&[width])?;
    if let Some(i) = inputs.iter().position(|v| v.len() != width) {
        return Err(Error::rejected(format!("input {i} has a different length")));
    }
    run_epochs(head, inputs.len(), config, |head, i| {
        let x = Tensor::from_vec(&[width], inputs[i].clone())?;
        let (out, cache) = head.forward_cached(&x)?;
        let target = if labels[i] {
            [T::zero(), T::one()]
        } else {
            [T::one(), T::zero()]
        };
        let lg = softmax_cross_entropy(out.data(), &target)?;
        let (grads, _) = head.backward(&cache, &lg.grad, &[], false)?;
        Ok((lg.loss.to_f64_lossy(), grads))
    })
}

/// A template-sized crop and a search-sized crop with a match label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub template: Vec<u8>,
    pub search: Vec<u8>,
    pub matching: bool,
}

impl LabeledPair {
    /// Central 19×19 of patch A against the central 55×55 of patch B.
    pub fn from_patch_pair(pair: &PatchPair) -> Result<Self> {
        Ok(LabeledPair {
            template: center_crop(&pair.a, TEMPLATE_SIZE)?,
            search: center_crop(&pair.b, SEARCH_SIZE)?,
            matching: pair.matching,
        })
    }
}

/// Match pairs from tracking samples: each template against its own search
/// window (match) and against another sample's window (non-match).
pub fn make_match_pairs(samples: &[TrackingSample], seed: u64) -> Result<Vec<LabeledPair>> {
    if samples.len() < 2 {
        return Err(Error::config("at least 2 samples are needed to form non-matches"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partner: Vec<usize> = (0..samples.len()).collect();
    partner.shuffle(&mut rng);
    let mut out = Vec::with_capacity(2 * samples.len());
    for (i, s) in samples.iter().enumerate() {
        let j = if partner[i] == i { (i + 1) % samples.len() } else { partner[i] };
        out.push(LabeledPair {
            template: s.template().to_vec(),
            search: s.search().to_vec(),
            matching: true,
        });
        out.push(LabeledPair {
            template: s.template().to_vec(),
            search: samples[j].search().to_vec(),
            matching: false,
        });
    }
    Ok(out)
}

/// Score map of a pair under the (frozen) conv stack.
pub fn pair_score_map<T: Scalar>(params: &NetworkParams<T>, pair: &LabeledPair) -> Result<ScoreMap<T>> {
    let t = extract_template_features(params, &normalize_patch(&pair.template, TEMPLATE_SIZE)?)?;
    let s = extract_search_features(params, &normalize_patch(&pair.search, SEARCH_SIZE)?)?;
    correlate(&t, &s)
}

/// Match probability for a pair: score map through the score head.
pub fn pair_match_score<T: Scalar>(params: &NetworkParams<T>, pair: &LabeledPair) -> Result<f64> {
    match_score(&params.score_head, &pair_score_map(params, pair)?)
}

/// Trains `params.score_head` on score maps produced by the frozen conv
/// stack.
pub fn train_score_head<T: Scalar>(
    params: &mut NetworkParams<T>,
    pairs: &[LabeledPair],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    if pairs.is_empty() {
        return Err(Error::config("no labeled pairs"));
    }
    let frozen: &NetworkParams<T> = params;
    let maps = pairs
        .par_iter()
        .map(|p| pair_score_map(frozen, p).map(|m| m.0))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.matching).collect();
    train_classifier(&mut params.score_head, &maps, &labels, config)
}

/// A template patch labeled by whether the tracker followed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPoint {
    /// Index of the originating tracking sample.
    pub sample: usize,
    pub template: Vec<u8>,
    pub positive: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelStats {
    pub positives: usize,
    pub negatives: usize,
    /// One class was absent, so nothing could be balanced.
    pub degenerate: bool,
}

pub fn localization_error(pred: Displacement, gt: Displacement) -> f64 {
    (((pred.dx - gt.dx).pow(2) + (pred.dy - gt.dy).pow(2)) as f64).sqrt()
}

/// Labels samples from given predictions, then subsamples the majority
/// class down to the minority count.
pub fn label_from_predictions(
    samples: &[TrackingSample],
    predictions: &[Displacement],
    seed: u64,
) -> Result<(Vec<LabeledPoint>, LabelStats)> {
    if samples.is_empty() {
        return Err(Error::config("no samples to label"));
    }
    if samples.len() != predictions.len() {
        return Err(Error::rejected("one prediction per sample required"));
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..samples.len()).partition(|&i| {
        localization_error(predictions[i], samples[i].displacement()) <= TRACKED_TOLERANCE
    });
    let mut stats = LabelStats {
        positives: pos.len(),
        negatives: neg.len(),
        degenerate: false,
    };
    let keep: Vec<usize> = if pos.is_empty() || neg.is_empty() {
        log::warn!(
            "detector labels are single-class ({} positive, {} negative); returning all points",
            pos.len(),
            neg.len()
        );
        stats.degenerate = true;
        (0..samples.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = pos.len().min(neg.len());
        let mut keep: Vec<usize> = pos
            .choose_multiple(&mut rng, n)
            .chain(neg.choose_multiple(&mut rng, n))
            .copied()
            .collect();
        keep.sort_unstable();
        keep
    };
    let points = keep
        .into_iter()
        .map(|i| LabeledPoint {
            sample: i,
            template: samples[i].template().to_vec(),
            positive: localization_error(predictions[i], samples[i].displacement())
                <= TRACKED_TOLERANCE,
        })
        .collect();
    Ok((points, stats))
}

/// Runs the tracker over `samples` and turns its successes and failures into
/// a balanced detector training set.
pub fn generate_detector_labels<T: Scalar>(
    params: &NetworkParams<T>,
    samples: &[TrackingSample],
    seed: u64,
) -> Result<(Vec<LabeledPoint>, LabelStats)> {
    if samples.is_empty() {
        return Err(Error::config("no samples to label"));
    }
    let predictions = samples
        .par_iter()
        .map(|s| track_patch(params, &s.template_tensor(), &s.search_tensor()).map(|(d, _)| d))
        .collect::<Result<Vec<_>>>()?;
    label_from_predictions(samples, &predictions, seed)
}

pub fn point_feature<T: Scalar>(params: &NetworkParams<T>, template: &[u8]) -> Result<TemplateFeature<T>> {
    extract_template_features(params, &normalize_patch(template, TEMPLATE_SIZE)?)
}

/// Trains `params.detector_head` on features from the frozen conv stack.
pub fn train_detector_head<T: Scalar>(
    params: &mut NetworkParams<T>,
    labels: &[LabeledPoint],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    if labels.is_empty() {
        return Err(Error::config("no labeled points"));
    }
    let frozen: &NetworkParams<T> = params;
    let features = labels
        .par_iter()
        .map(|p| point_feature(frozen, &p.template).map(|f| f.0))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<bool> = labels.iter().map(|p| p.positive).collect();
    train_classifier(&mut params.detector_head, &features, &targets, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DenseLayerParams, Layer};
    use crate::tracker::Architecture;
    use rand::Rng;

    fn zero_head(inputs: usize) -> Sequential<f32> {
        Sequential::new(vec![
            Layer::Dense(DenseLayerParams::zeros(inputs, 4)),
            Layer::Relu,
            Layer::Dense(DenseLayerParams::zeros(4, 2)),
        ])
    }

    #[test]
    fn zero_heads_are_undecided() {
        let p = match_score(&zero_head(CELLS), &ScoreMap(vec![3.0; CELLS])).unwrap();
        assert_eq!(p, 0.5);
        let p = trackability_score(&zero_head(8), &TemplateFeature(vec![1.0; 8])).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn probabilities_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = Sequential::new(vec![
            Layer::Dense(DenseLayerParams::<f64>::he_init(CELLS, 8, &mut rng)),
            Layer::Relu,
            Layer::Dense(DenseLayerParams::he_init(8, 2, &mut rng)),
        ]);
        for _ in 0..10 {
            let map = ScoreMap((0..CELLS).map(|_| rng.gen_range(-5.0..5.0)).collect());
            let p = match_score(&head, &map).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(match_score(&head, &ScoreMap(vec![0.0; 10])).is_err());
    }

    #[test]
    fn random_predictions_hit_the_disc_rarely() {
        // Exact count of window cells within 3 px of the center.
        let disc = (0..CELLS)
            .filter(|&c| localization_error(Displacement::from_cell(c), Displacement::default()) <= 3.0)
            .count();
        assert_eq!(disc, 29);

        let template = vec![0u8; 361];
        let search = vec![0u8; 3025];
        let samples: Vec<TrackingSample> = (0..20_000)
            .map(|_| TrackingSample::new(template.clone(), search.clone(), Displacement::default()).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let preds: Vec<Displacement> = (0..samples.len())
            .map(|_| Displacement::from_cell(rng.gen_range(0..CELLS)))
            .collect();
        let (points, stats) = label_from_predictions(&samples, &preds, 1).unwrap();
        let rate = stats.positives as f64 / samples.len() as f64;
        let expected = disc as f64 / CELLS as f64;
        assert!((rate - expected).abs() < 0.004, "rate {rate} vs {expected}");
        let pos = points.iter().filter(|p| p.positive).count();
        assert_eq!(pos, points.len() - pos);
        assert_eq!(pos, stats.positives);
    }

    #[test]
    fn perfect_tracker_gives_degenerate_all_positive_labels() {
        let samples: Vec<TrackingSample> = (0..5)
            .map(|i| TrackingSample::new(vec![i; 361], vec![0; 3025], Displacement::new(i as i32, 0)).unwrap())
            .collect();
        let preds: Vec<Displacement> = samples.iter().map(|s| s.displacement()).collect();
        let (points, stats) = label_from_predictions(&samples, &preds, 0).unwrap();
        assert!(stats.degenerate);
        assert_eq!(points.len(), 5);
        assert!(points.iter().all(|p| p.positive));
        assert!(label_from_predictions(&[], &[], 0).is_err());
    }

    #[test]
    fn separable_score_maps_are_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut make = |peaked: bool| -> Vec<f32> {
            let mut m: Vec<f32> = (0..CELLS).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if peaked {
                // Matches peak near the window center.
                let (pr, pc) = (rng.gen_range(15..22) as f32, rng.gen_range(15..22) as f32);
                for (i, v) in m.iter_mut().enumerate() {
                    let (r, c) = ((i / 37) as f32, (i % 37) as f32);
                    *v += 8.0 * (-((r - pr).powi(2) + (c - pc).powi(2)) / 4.5).exp();
                }
            }
            m
        };
        let train: Vec<(Vec<f32>, bool)> = (0..400).map(|i| (make(i % 2 == 0), i % 2 == 0)).collect();
        let test: Vec<(Vec<f32>, bool)> = (0..200).map(|i| (make(i % 2 == 1), i % 2 == 1)).collect();
        let arch = Architecture {
            widths: [1, 2, 2, 2, 2, 2, 2, 2, 2, 2],
            score_hidden: [32, 16],
            detector_hidden: 4,
        };
        let mut params = NetworkParams::<f32>::init(&arch, 1);
        let config = TrainConfig {
            epochs: 15,
            batch_size: 16,
            ..TrainConfig::score_head()
        };
        let (x, y): (Vec<_>, Vec<_>) = train.into_iter().unzip();
        let log = train_classifier(&mut params.score_head, &x, &y, &config).unwrap();
        assert!(log.last().unwrap().mean_loss < log[0].mean_loss);
        let correct = test
            .iter()
            .filter(|(m, label)| {
                (match_score(&params.score_head, &ScoreMap(m.clone())).unwrap() > 0.5) == *label
            })
            .count();
        assert!(correct as f64 / test.len() as f64 >= 0.95, "{correct}/200");
    }
}
