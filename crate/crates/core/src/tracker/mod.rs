//! Two-branch correlation tracker.
//!
//! A 19×19 template from frame t and a 55×55 search window from frame t+1
//! pass through one shared stack of nine valid 3×3 convolutions. The
//! template collapses to a single feature vector, the search window to a
//! 37×37 grid of feature vectors, and their per-cell dot products form the
//! score map whose argmax is the predicted displacement.

mod params;
mod samples;
pub(crate) mod train;

pub use params::{Architecture, NetworkParams};
pub use samples::{read_samples, write_samples, TrackingSample, SAMPLE_MAGIC};
pub use train::{sample_loss_and_grads, train_tracker, BatchGrads, EpochLog};

use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, LossGrad, Tensor};
use crate::scalar::Scalar;

pub const TEMPLATE_SIZE: usize = 19;
pub const SEARCH_SIZE: usize = 55;
pub const WINDOW: usize = 37;
pub const CENTER: usize = 18;
pub const MAX_DISPLACEMENT: i32 = 18;
pub const CELLS: usize = WINDOW * WINDOW;
/// Spread of the 3×3 target kernel, in cells.
pub const TARGET_SIGMA: f64 = 1.0;

/// Integer displacement; cell `(CENTER + dy, CENTER + dx)` of the score map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Displacement {
    pub dx: i32,
    pub dy: i32,
}

impl Displacement {
    pub fn new(dx: i32, dy: i32) -> Self {
        Displacement { dx, dy }
    }

    pub fn in_window(self) -> bool {
        self.dx.abs() <= MAX_DISPLACEMENT && self.dy.abs() <= MAX_DISPLACEMENT
    }

    pub fn from_cell(index: usize) -> Self {
        let (r, c) = (index / WINDOW, index % WINDOW);
        Displacement {
            dx: c as i32 - CENTER as i32,
            dy: r as i32 - CENTER as i32,
        }
    }

    pub fn cell(self) -> Option<usize> {
        self.in_window().then(|| {
            (self.dy + CENTER as i32) as usize * WINDOW + (self.dx + CENTER as i32) as usize
        })
    }
}

/// Conv-stack output for a template patch.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateFeature<T>(pub Vec<T>);

/// Conv-stack output for a search window, stored channel-major
/// (`[channels, 37, 37]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SearchFeatureMap<T> {
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> SearchFeatureMap<T> {
    pub fn cell(&self, row: usize, col: usize) -> Vec<T> {
        (0..self.channels)
            .map(|ch| self.data[ch * CELLS + row * WINDOW + col])
            .collect()
    }
}

/// 37×37 correlation responses, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap<T>(pub Vec<T>);

/// 37×37 target distribution for the tracker loss, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution<T>(pub Vec<T>);

fn expect_square(patch: &Tensor<impl Scalar>, size: usize, what: &str) -> Result<()> {
    match patch.chw() {
        Ok((1, h, w)) if h == size && w == size => Ok(()),
        _ => Err(Error::rejected(format!(
            "{what} must be a single-channel {size}x{size} patch, got shape {:?}",
            patch.shape()
        ))),
    }
}

/// Luminance to `[0, 1]`, then the patch mean removed.
pub fn normalize_patch<T: Scalar>(pixels: &[u8], size: usize) -> Result<Tensor<T>> {
    if pixels.len() != size * size {
        return Err(Error::rejected(format!(
            "expected {} pixels for a {size}x{size} patch, got {}",
            size * size,
            pixels.len()
        )));
    }
    let mean = pixels.iter().map(|&p| p as f64).sum::<f64>() / (255.0 * pixels.len() as f64);
    let data = pixels
        .iter()
        .map(|&p| T::lit(p as f64 / 255.0 - mean))
        .collect();
    Tensor::from_vec(&[1, size, size], data)
}

pub fn extract_template_features<T: Scalar>(
    params: &NetworkParams<T>,
    patch: &Tensor<T>,
) -> Result<TemplateFeature<T>> {
    expect_square(patch, TEMPLATE_SIZE, "template")?;
    Ok(TemplateFeature(params.conv.forward(patch)?.into_data()))
}

pub fn extract_search_features<T: Scalar>(
    params: &NetworkParams<T>,
    patch: &Tensor<T>,
) -> Result<SearchFeatureMap<T>> {
    expect_square(patch, SEARCH_SIZE, "search window")?;
    let out = params.conv.forward(patch)?;
    Ok(SearchFeatureMap {
        channels: out.shape()[0],
        data: out.into_data(),
    })
}

/// `score[r][c] = <template, search[r][c]>`, unnormalized.
pub fn correlate<T: Scalar>(
    template: &TemplateFeature<T>,
    search: &SearchFeatureMap<T>,
) -> Result<ScoreMap<T>> {
    if template.0.len() != search.channels || search.data.len() != search.channels * CELLS {
        return Err(Error::rejected(format!(
            "template has {} channels, search map {} over {} values",
            template.0.len(),
            search.channels,
            search.data.len()
        )));
    }
    let mut out = vec![T::zero(); CELLS];
    T::gemm(
        1,
        search.channels,
        CELLS,
        T::one(),
        &template.0,
        search.channels as isize,
        1,
        &search.data,
        CELLS as isize,
        1,
        T::zero(),
        &mut out,
        CELLS as isize,
        1,
    );
    Ok(ScoreMap(out))
}

/// Argmax cell as a displacement; ties go to the smallest row-major index.
pub fn predict_displacement<T: Scalar>(score: &ScoreMap<T>) -> Displacement {
    let mut best = 0;
    for (i, &v) in score.0.iter().enumerate() {
        if v > score.0[best] {
            best = i;
        }
    }
    Displacement::from_cell(best)
}

pub fn build_target_distribution<T: Scalar>(gt: Displacement) -> Result<TargetDistribution<T>> {
    if !gt.in_window() {
        return Err(Error::rejected(format!(
            "ground truth ({}, {}) lies outside the ±{MAX_DISPLACEMENT} window",
            gt.dx, gt.dy
        )));
    }
    let mut out = vec![0.0f64; CELLS];
    let (r0, c0) = (gt.dy + CENTER as i32, gt.dx + CENTER as i32);
    let mut total = 0.0;
    for i in -1..=1i32 {
        for j in -1..=1i32 {
            let (r, c) = (r0 + i, c0 + j);
            if r < 0 || c < 0 || r >= WINDOW as i32 || c >= WINDOW as i32 {
                continue;
            }
            let w = (-((i * i + j * j) as f64) / (2.0 * TARGET_SIGMA * TARGET_SIGMA)).exp();
            out[r as usize * WINDOW + c as usize] = w;
            total += w;
        }
    }
    Ok(TargetDistribution(
        out.into_iter().map(|w| T::lit(w / total)).collect(),
    ))
}

/// Softmax over all 1369 cells, cross-entropy against the target; the
/// gradient is with respect to the score map.
pub fn tracker_loss<T: Scalar>(
    score: &ScoreMap<T>,
    target: &TargetDistribution<T>,
) -> Result<LossGrad<T>> {
    if score.0.len() != CELLS || target.0.len() != CELLS {
        return Err(Error::rejected("score map and target must both have 1369 cells"));
    }
    softmax_cross_entropy(&score.0, &target.0)
}

/// Full tracker inference on raw patches.
pub fn track_patch<T: Scalar>(
    params: &NetworkParams<T>,
    template: &Tensor<T>,
    search: &Tensor<T>,
) -> Result<(Displacement, ScoreMap<T>)> {
    let t = extract_template_features(params, template)?;
    let s = extract_search_features(params, search)?;
    let score = correlate(&t, &s)?;
    Ok((predict_displacement(&score), score))
}
