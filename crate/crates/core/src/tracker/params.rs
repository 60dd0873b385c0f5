use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CELLS;
use crate::error::{Error, Result};
use crate::nn::serialize::{self, stack_from_named, stack_to_named};
use crate::nn::{ConvLayerParams, DenseLayerParams, Layer, Sequential};
use crate::scalar::Scalar;

pub const CONV_PREFIX: &str = "conv";
pub const SCORE_PREFIX: &str = "score";
pub const DETECTOR_PREFIX: &str = "detector";

/// Layer widths of the conv stack and both heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Channel widths from the input through each of the nine conv layers.
    pub widths: [usize; 10],
    pub score_hidden: [usize; 2],
    pub detector_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            widths: [1, 16, 16, 32, 32, 64, 64, 96, 96, 128],
            score_hidden: [512, 256],
            detector_hidden: 64,
        }
    }
}

impl Architecture {
    pub fn feature_dim(&self) -> usize {
        self.widths[9]
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths[0] != 1 {
            return Err(Error::config("conv stack input must be single-channel"));
        }
        if self.widths.contains(&0)
            || self.score_hidden.contains(&0)
            || self.detector_hidden == 0
        {
            return Err(Error::config("layer widths must be >= 1"));
        }
        Ok(())
    }
}

/// Every learnable weight: the shared conv stack and both heads.
///
/// Template and search branches both read `conv`; there is no second copy.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub conv: Sequential<T>,
    pub score_head: Sequential<T>,
    pub detector_head: Sequential<T>,
}

fn build<T: Scalar>(
    arch: &Architecture,
    mut conv: impl FnMut(usize, usize) -> ConvLayerParams<T>,
    mut dense: impl FnMut(usize, usize) -> DenseLayerParams<T>,
) -> NetworkParams<T> {
    let mut conv_layers = Vec::new();
    for i in 0..9 {
        conv_layers.push(Layer::Conv(conv(arch.widths[i], arch.widths[i + 1])));
        // last conv stays linear so correlation sees signed features
        if i < 8 {
            conv_layers.push(Layer::Relu);
        }
    }
    let [h1, h2] = arch.score_hidden;
    let score = vec![
        Layer::Dense(dense(CELLS, h1)),
        Layer::Relu,
        Layer::Dense(dense(h1, h2)),
        Layer::Relu,
        Layer::Dense(dense(h2, 2)),
    ];
    let detector = vec![
        Layer::Dense(dense(arch.feature_dim(), arch.detector_hidden)),
        Layer::Relu,
        Layer::Dense(dense(arch.detector_hidden, 2)),
    ];
    NetworkParams {
        conv: Sequential::new(conv_layers),
        score_head: Sequential::new(score),
        detector_head: Sequential::new(detector),
    }
}

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        build(arch, ConvLayerParams::zeros, DenseLayerParams::zeros)
    }

    /// He-initialized weights from a seeded stream.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv_rng = rng.clone();
        let conv_layers = build(arch, |i, o| ConvLayerParams::he_init(i, o, &mut conv_rng), DenseLayerParams::zeros).conv;
        rng.set_stream(1);
        let mut heads = build(arch, ConvLayerParams::zeros, |i, o| DenseLayerParams::he_init(i, o, &mut rng));
        heads.conv = conv_layers;
        heads
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let conv_widths: Vec<(usize, usize)> = self
            .conv
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some((c.in_channels(), c.out_channels())),
                _ => None,
            })
            .collect();
        let dense_out = |s: &Sequential<T>| -> Vec<usize> {
            s.layers
                .iter()
                .filter_map(|l| match l {
                    Layer::Dense(d) => Some(d.outputs()),
                    _ => None,
                })
                .collect()
        };
        let score = dense_out(&self.score_head);
        let det = dense_out(&self.detector_head);
        if conv_widths.len() != 9 || score.len() != 3 || det.len() != 2 {
            return Err(Error::config(format!(
                "expected 9 conv / 3 score / 2 detector layers, found {} / {} / {}",
                conv_widths.len(),
                score.len(),
                det.len()
            )));
        }
        let mut widths = [0; 10];
        widths[0] = conv_widths[0].0;
        for (i, &(_, o)) in conv_widths.iter().enumerate() {
            widths[i + 1] = o;
        }
        Ok(Architecture {
            widths,
            score_hidden: [score[0], score[1]],
            detector_hidden: det[0],
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.conv
            .layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv(c) => Some(c.out_channels()),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn to_named(&self) -> Vec<serialize::NamedTensor> {
        let mut out = stack_to_named(CONV_PREFIX, &self.conv);
        out.extend(stack_to_named(SCORE_PREFIX, &self.score_head));
        out.extend(stack_to_named(DETECTOR_PREFIX, &self.detector_head));
        out
    }

    pub fn from_named(entries: &[serialize::NamedTensor]) -> Result<Self> {
        let params = NetworkParams {
            conv: stack_from_named(CONV_PREFIX, entries)?,
            score_head: stack_from_named(SCORE_PREFIX, entries)?,
            detector_head: stack_from_named(DETECTOR_PREFIX, entries)?,
        };
        let arch = params
            .architecture()
            .map_err(|e| Error::CorruptFile(e.to_string()))?;
        let checks = [
            (params.score_head.output_shape(&[CELLS]), "score head"),
            (params.detector_head.output_shape(&[arch.feature_dim()]), "detector head"),
            (params.conv.output_shape(&[1, 19, 19]), "conv stack"),
        ];
        for (r, what) in checks {
            r.map_err(|e| Error::CorruptFile(format!("{what}: {e}")))?;
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serialize::write_file(path, &self.to_named())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_named(&serialize::read_file(path)?)
    }
}
