//! Learned point tracking: a shared conv stack correlates a template patch
//! against a search window, two small heads score matches and
//! trackability, and a detect/track/re-detect loop runs them over video.
//! A pyramidal Lucas-Kanade tracker and the evaluation metrics live
//! alongside.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the 32-bit variant used by the command-line tool.

pub mod datasets;
pub mod error;
pub mod eval;
pub mod heads;
pub mod klt;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod tracker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Network = tracker::NetworkParams<f32>;
pub type Stack = nn::Sequential<f32>;
pub type ScoreMap32 = tracker::ScoreMap<f32>;
pub type TemplateFeature32 = tracker::TemplateFeature<f32>;
pub type Pyramid32 = klt::Pyramid<f32>;
