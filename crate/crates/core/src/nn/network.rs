//! Fixed layer-stack networks with cached forward passes and backprop.

use super::activation::{relu, relu_backward};
use super::conv::{ConvCache, ConvLayerParams};
use super::dense::DenseLayerParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(ConvLayerParams<T>),
    Dense(DenseLayerParams<T>),
    Relu,
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            Layer::Relu => 0,
        }
    }
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv(ConvCache<T>),
    Dense(Vec<T>),
    Relu(Vec<T>),
}

/// Activations recorded by [`Sequential::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    caches: Vec<LayerCache<T>>,
    /// Shape of every layer's output, used to restore shapes going backward.
    shapes: Vec<Vec<usize>>,
    input_shape: Vec<usize>,
}

/// Gradients laid out like [`Sequential::param_slices`]: for every
/// parameterized layer, its weights then its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T>(pub Vec<Vec<T>>);

impl<T: Scalar> ParamGrads<T> {
    pub fn add_assign(&mut self, other: &ParamGrads<T>) {
        assert_eq!(self.0.len(), other.0.len(), "gradient layouts differ");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            assert_eq!(a.len(), b.len(), "gradient layouts differ");
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        self.0.iter_mut().flatten().for_each(|x| *x *= factor);
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.iter().flatten().all(|&x| x == T::zero())
    }

    pub fn concat(mut self, other: ParamGrads<T>) -> Self {
        self.0.extend(other.0);
        self
    }
}

/// A chain of layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Sequential { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.kernels.data());
                    out.push(&c.biases[..]);
                }
                Layer::Dense(d) => {
                    out.push(d.weights.data());
                    out.push(&d.biases[..]);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.kernels.data_mut());
                    out.push(&mut c.biases[..]);
                }
                Layer::Dense(d) => {
                    out.push(d.weights.data_mut());
                    out.push(&mut d.biases[..]);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn zero_grads(&self) -> ParamGrads<T> {
        ParamGrads(
            self.param_slices()
                .iter()
                .map(|s| vec![T::zero(); s.len()])
                .collect(),
        )
    }

    /// Checks that every layer accepts the output of its predecessor for an
    /// input of `input_shape`, returning the final output shape.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input_shape.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match layer {
                Layer::Conv(c) => {
                    let (ch, h, w) = match *shape.as_slice() {
                        [h, w] => (1, h, w),
                        [ch, h, w] => (ch, h, w),
                        [1, ch, h, w] => (ch, h, w),
                        _ => {
                            return Err(Error::config(format!(
                                "layer {i} (conv) cannot follow a {shape:?} output"
                            )))
                        }
                    };
                    if ch != c.in_channels() || h < 3 || w < 3 {
                        return Err(Error::config(format!(
                            "layer {i} (conv, {} in-channels) cannot take a {ch}x{h}x{w} input",
                            c.in_channels()
                        )));
                    }
                    vec![c.out_channels(), h - 2, w - 2]
                }
                Layer::Dense(d) => {
                    let n: usize = shape.iter().product();
                    if n != d.inputs() {
                        return Err(Error::config(format!(
                            "layer {i} (dense, {} inputs) cannot take {n} values",
                            d.inputs()
                        )));
                    }
                    vec![d.outputs()]
                }
                Layer::Relu => shape,
            };
        }
        Ok(shape)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.output_shape(input.shape())?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => c.forward(&x)?,
                Layer::Dense(d) => {
                    let out = d.forward(x.data())?;
                    Tensor::from_vec(&[out.len()], out)?
                }
                Layer::Relu => relu(&x),
            };
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.output_shape(input.shape())?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => {
                    let (out, cache) = c.forward_cached(&x)?;
                    caches.push(LayerCache::Conv(cache));
                    out
                }
                Layer::Dense(d) => {
                    let out = d.forward(x.data())?;
                    caches.push(LayerCache::Dense(x.into_data()));
                    Tensor::from_vec(&[out.len()], out)?
                }
                Layer::Relu => {
                    let out = relu(&x);
                    caches.push(LayerCache::Relu(x.into_data()));
                    out
                }
            };
            shapes.push(x.shape().to_vec());
        }
        Ok((
            x,
            ForwardCache {
                caches,
                shapes,
                input_shape: input.shape().to_vec(),
            },
        ))
    }

    /// Backpropagates `grad_out` through the cached pass.
    ///
    /// Layers with `frozen[i] == true` report all-zero parameter gradients;
    /// gradients still flow through them when an earlier layer needs them.
    /// `frozen` may be shorter than the layer list (missing entries are
    /// trainable).
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_out: &[T],
        frozen: &[bool],
        want_input_grad: bool,
    ) -> Result<(ParamGrads<T>, Option<Tensor<T>>)> {
        if cache.caches.len() != self.layers.len() {
            return Err(Error::Usage(
                "backward called with a cache from a different network".into(),
            ));
        }
        let out_len: usize = cache
            .shapes
            .last()
            .map_or_else(|| cache.input_shape.iter().product(), |s| s.iter().product());
        if grad_out.len() != out_len {
            return Err(Error::Usage(format!(
                "backward: upstream gradient has {} values, output has {out_len}",
                grad_out.len()
            )));
        }
        let is_frozen = |i: usize| frozen.get(i).copied().unwrap_or(false);
        // Earliest layer that still needs an upstream gradient.
        let first_needed = if want_input_grad {
            0
        } else {
            (0..self.layers.len())
                .find(|&i| self.layers[i].param_count() > 0 && !is_frozen(i))
                .unwrap_or(self.layers.len())
        };

        let mut per_layer: Vec<Option<(Vec<T>, Vec<T>)>> = vec![None; self.layers.len()];
        let mut grad = grad_out.to_vec();
        let mut reached_input = true;
        for i in (0..self.layers.len()).rev() {
            if i < first_needed {
                reached_input = false;
                break;
            }
            let need_input = i > first_needed || want_input_grad;
            match (&self.layers[i], &cache.caches[i]) {
                (Layer::Conv(c), LayerCache::Conv(cc)) => {
                    if is_frozen(i) && !need_input {
                        reached_input = false;
                        break;
                    }
                    let (g, din) = c.backward(cc, &grad, need_input)?;
                    if !is_frozen(i) {
                        per_layer[i] = Some((g.kernels, g.biases));
                    }
                    match din {
                        Some(d) => grad = d,
                        None => {
                            reached_input = i == 0;
                            break;
                        }
                    }
                }
                (Layer::Dense(d), LayerCache::Dense(input)) => {
                    if is_frozen(i) && !need_input {
                        reached_input = false;
                        break;
                    }
                    let (g, din) = d.backward(input, &grad, need_input)?;
                    if !is_frozen(i) {
                        per_layer[i] = Some((g.weights, g.biases));
                    }
                    match din {
                        Some(d) => grad = d,
                        None => {
                            reached_input = i == 0;
                            break;
                        }
                    }
                }
                (Layer::Relu, LayerCache::Relu(pre)) => {
                    grad = relu_backward(pre, &grad);
                }
                _ => {
                    return Err(Error::Usage(
                        "backward cache does not match the layer sequence".into(),
                    ))
                }
            }
        }

        let mut grads = Vec::new();
        for (layer, g) in self.layers.iter().zip(per_layer) {
            match layer {
                Layer::Conv(c) => {
                    let (k, b) = g.unwrap_or_else(|| {
                        (vec![T::zero(); c.kernels.len()], vec![T::zero(); c.biases.len()])
                    });
                    grads.push(k);
                    grads.push(b);
                }
                Layer::Dense(d) => {
                    let (w, b) = g.unwrap_or_else(|| {
                        (vec![T::zero(); d.weights.len()], vec![T::zero(); d.biases.len()])
                    });
                    grads.push(w);
                    grads.push(b);
                }
                Layer::Relu => {}
            }
        }
        let input_grad = if want_input_grad && reached_input {
            Some(Tensor::from_vec(&cache.input_shape, grad)?)
        } else {
            None
        };
        Ok((ParamGrads(grads), input_grad))
    }
}
