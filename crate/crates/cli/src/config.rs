//! JSON run configuration and flag precedence: flags, then the config
//! file, then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use deeppt::klt::LkParams;
use deeppt::nn::TrainConfig;
use deeppt::pipeline::PipelineConfig;
use deeppt::tracker::Architecture;
use serde::{Deserialize, Serialize};

/// Problems the user must fix in their invocation; exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Optional TrainConfig fields layered over a command's defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub base_lr: Option<f64>,
    pub lr_decay: Option<f64>,
    pub weight_decay: Option<f64>,
    pub momentum: Option<f64>,
    pub step_factor: Option<f64>,
    pub step_interval: Option<u32>,
    pub step_start: Option<u32>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
}

impl TrainOverrides {
    /// `self` wins over `lower` field by field.
    pub fn over(&self, lower: &TrainOverrides) -> TrainOverrides {
        TrainOverrides {
            base_lr: self.base_lr.or(lower.base_lr),
            lr_decay: self.lr_decay.or(lower.lr_decay),
            weight_decay: self.weight_decay.or(lower.weight_decay),
            momentum: self.momentum.or(lower.momentum),
            step_factor: self.step_factor.or(lower.step_factor),
            step_interval: self.step_interval.or(lower.step_interval),
            step_start: self.step_start.or(lower.step_start),
            epochs: self.epochs.or(lower.epochs),
            batch_size: self.batch_size.or(lower.batch_size),
        }
    }

    pub fn apply(&self, mut base: TrainConfig, seed: u64) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { base.$f = v; } )*};
        }
        set!(base_lr, lr_decay, weight_decay, momentum, step_factor, step_interval, step_start, epochs, batch_size);
        base.seed = seed;
        base
    }
}

/// Contents of `--config FILE`. Every key is optional; unknown keys are
/// rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub holdout: Option<usize>,
    pub weights: Option<PathBuf>,
    pub kitti: Option<PathBuf>,
    pub ubc: Option<PathBuf>,
    pub match_file: Option<String>,
    pub train_set: Option<String>,
    pub max_pairs: Option<usize>,
    pub max_per_pair: Option<usize>,
    pub max_points: Option<usize>,
    pub frames: Option<PathBuf>,
    pub method: Option<String>,
    pub tracks: Option<PathBuf>,
    pub correspondences: Option<PathBuf>,
    pub homographies: Option<PathBuf>,
    pub inlier_threshold: Option<f64>,
    pub thresholds: Option<Vec<f64>>,
    pub count: Option<usize>,
    pub harris_threshold: Option<f64>,
    pub harris_nms_radius: Option<usize>,
    pub overlays: Option<bool>,
    pub train: Option<TrainOverrides>,
    pub architecture: Option<Architecture>,
    pub pipeline: Option<PipelineConfig>,
    pub lk: Option<LkParams>,
}

pub fn load_file_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// Dataset root from `DEEPPT_DATA`, joined with `sub`.
pub fn data_default(sub: &str) -> Option<PathBuf> {
    std::env::var_os("DEEPPT_DATA").map(|root| PathBuf::from(root).join(sub))
}

/// Resolves a path option (flag, then config, then `DEEPPT_DATA/<sub>`)
/// and checks that it exists.
pub fn existing_path(
    flag: Option<PathBuf>,
    file: Option<PathBuf>,
    data_sub: Option<&str>,
    what: &str,
) -> anyhow::Result<PathBuf> {
    let path = flag
        .or(file)
        .or_else(|| data_sub.and_then(data_default))
        .ok_or_else(|| usage(format!("missing {what}; pass --{what}")))?;
    if !path.exists() {
        return Err(usage(format!("{what} path {} does not exist", path.display())));
    }
    Ok(path)
}

pub fn optional_existing(flag: Option<PathBuf>, file: Option<PathBuf>, what: &str) -> anyhow::Result<Option<PathBuf>> {
    match flag.or(file) {
        Some(p) if !p.exists() => Err(usage(format!("{what} path {} does not exist", p.display()))),
        other => Ok(other),
    }
}

/// Writes pretty JSON, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Comma-separated flag value. Wrapped so clap sees one value, not many.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<List<T>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| format!("bad list element {t:?}")))
        .collect::<Result<_, _>>()
        .map(List)
}
