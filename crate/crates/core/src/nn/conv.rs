//! Valid, stride-1, 3×3 convolution lowered to a matrix product (im2col).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams<T> {
    /// `[out, in, 3, 3]`
    pub kernels: Tensor<T>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub kernels: Vec<T>,
    pub biases: Vec<T>,
}

/// Lowered input kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    in_shape: (usize, usize, usize),
}

impl<T: Scalar> ConvLayerParams<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvLayerParams {
            kernels: Tensor::zeros(&[out_channels, in_channels, KERNEL, KERNEL]),
            biases: vec![T::zero(); out_channels],
        }
    }

    /// He initialization: N(0, 2 / fan_in), zero biases.
    pub fn he_init(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let fan_in = (in_channels * TAPS) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
        let kernels = Tensor::from_fn(&[out_channels, in_channels, KERNEL, KERNEL], |_| {
            T::lit(normal.sample(rng))
        });
        ConvLayerParams {
            kernels,
            biases: vec![T::zero(); out_channels],
        }
    }

    pub fn from_parts(kernels: Tensor<T>, biases: Vec<T>) -> Result<Self> {
        let s = kernels.shape();
        if s.len() != 4 || s[2] != KERNEL || s[3] != KERNEL {
            return Err(Error::rejected(format!(
                "conv kernels must be [out, in, 3, 3], got {s:?}"
            )));
        }
        if biases.len() != s[0] {
            return Err(Error::rejected(format!(
                "conv layer has {} kernels but {} biases",
                s[0],
                biases.len()
            )));
        }
        Ok(ConvLayerParams { kernels, biases })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.biases.len()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input.chw()?;
        if c != self.in_channels() {
            return Err(Error::rejected(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        if h < KERNEL || w < KERNEL {
            return Err(Error::rejected(format!(
                "conv input must be at least 3x3, got {h}x{w}"
            )));
        }
        Ok((c, h, w))
    }

    /// Output is `[out, H-2, W-2]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (c, h, w) = self.check_input(input)?;
        let (oh, ow) = (h - 2, w - 2);
        let positions = oh * ow;
        let cols = im2col(input.data(), c, h, w);

        let o = self.out_channels();
        let mut out = Vec::with_capacity(o * positions);
        for &b in &self.biases {
            out.extend(std::iter::repeat_n(b, positions));
        }
        let k = c * TAPS;
        T::gemm(
            o,
            k,
            positions,
            T::one(),
            self.kernels.data(),
            k as isize,
            1,
            &cols,
            positions as isize,
            1,
            T::one(),
            &mut out,
            positions as isize,
            1,
        );
        let out = Tensor::from_vec(&[o, oh, ow], out)?;
        Ok((
            out,
            ConvCache {
                cols,
                in_shape: (c, h, w),
            },
        ))
    }

    /// Returns parameter gradients and, when requested, the input gradient.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        grad_out: &[T],
        want_input_grad: bool,
    ) -> Result<(ConvGrads<T>, Option<Vec<T>>)> {
        let (c, h, w) = cache.in_shape;
        let positions = (h - 2) * (w - 2);
        let o = self.out_channels();
        if grad_out.len() != o * positions {
            return Err(Error::Usage(format!(
                "conv backward: gradient has {} values, expected {}",
                grad_out.len(),
                o * positions
            )));
        }
        let k = c * TAPS;

        let mut dk = vec![T::zero(); o * k];
        // dK = dOut · colsᵀ
        T::gemm(
            o,
            positions,
            k,
            T::one(),
            grad_out,
            positions as isize,
            1,
            &cache.cols,
            1,
            positions as isize,
            T::zero(),
            &mut dk,
            k as isize,
            1,
        );
        let db = grad_out
            .chunks_exact(positions)
            .map(|row| sum_f64(row))
            .collect();

        let din = if want_input_grad {
            let mut dcols = vec![T::zero(); k * positions];
            // dCols = Kᵀ · dOut
            T::gemm(
                k,
                o,
                positions,
                T::one(),
                self.kernels.data(),
                1,
                k as isize,
                grad_out,
                positions as isize,
                1,
                T::zero(),
                &mut dcols,
                positions as isize,
                1,
            );
            Some(col2im(&dcols, c, h, w))
        } else {
            None
        };
        Ok((
            ConvGrads {
                kernels: dk,
                biases: db,
            },
            din,
        ))
    }
}

/// Sum with 64-bit accumulation.
pub(crate) fn sum_f64<T: Scalar>(xs: &[T]) -> T {
    T::lit(xs.iter().map(|x| x.to_f64_lossy()).sum::<f64>())
}

/// Row `(ch*9 + ky*3 + kx)`, column `(y*ow + x)` holds `input[ch, y+ky, x+kx]`.
fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h - 2, w - 2);
    let positions = oh * ow;
    let mut cols = vec![T::zero(); c * TAPS * positions];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ch * TAPS + ky * KERNEL + kx) * positions;
                let dst = &mut cols[row..row + positions];
                for y in 0..oh {
                    let src = &plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                    dst[y * ow..(y + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h - 2, w - 2);
    let positions = oh * ow;
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ch * TAPS + ky * KERNEL + kx) * positions;
                let src = &cols[row..row + positions];
                for y in 0..oh {
                    let dst = &mut plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                    for (d, &s) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}
