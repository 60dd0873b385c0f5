use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams<T> {
    /// `[out, in]`
    pub weights: Tensor<T>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> DenseLayerParams<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayerParams {
            weights: Tensor::zeros(&[outputs, inputs]),
            biases: vec![T::zero(); outputs],
        }
    }

    pub fn he_init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("finite std");
        DenseLayerParams {
            weights: Tensor::from_fn(&[outputs, inputs], |_| T::lit(normal.sample(rng))),
            biases: vec![T::zero(); outputs],
        }
    }

    pub fn from_parts(weights: Tensor<T>, biases: Vec<T>) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 2 || s[0] != biases.len() {
            return Err(Error::rejected(format!(
                "dense layer needs [out, in] weights and out biases, got {s:?} / {}",
                biases.len()
            )));
        }
        Ok(DenseLayerParams { weights, biases })
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// `weights · input + biases`
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.inputs() {
            return Err(Error::rejected(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                input.len()
            )));
        }
        let mut out = self.biases.clone();
        T::gemm(
            self.outputs(),
            self.inputs(),
            1,
            T::one(),
            self.weights.data(),
            self.inputs() as isize,
            1,
            input,
            1,
            1,
            T::one(),
            &mut out,
            1,
            1,
        );
        Ok(out)
    }

    pub fn backward(
        &self,
        input: &[T],
        grad_out: &[T],
        want_input_grad: bool,
    ) -> Result<(DenseGrads<T>, Option<Vec<T>>)> {
        let (o, n) = (self.outputs(), self.inputs());
        if grad_out.len() != o || input.len() != n {
            return Err(Error::Usage(format!(
                "dense backward: got {} upstream / {} cached values for a {n}->{o} layer",
                grad_out.len(),
                input.len()
            )));
        }
        let mut dw = vec![T::zero(); o * n];
        for (row, &g) in dw.chunks_exact_mut(n).zip(grad_out) {
            if g == T::zero() {
                continue;
            }
            for (d, &x) in row.iter_mut().zip(input) {
                *d = g * x;
            }
        }
        let din = want_input_grad.then(|| {
            let mut din = vec![T::zero(); n];
            T::gemm(
                1,
                o,
                n,
                T::one(),
                grad_out,
                o as isize,
                1,
                self.weights.data(),
                n as isize,
                1,
                T::zero(),
                &mut din,
                n as isize,
                1,
            );
            din
        });
        Ok((
            DenseGrads {
                weights: dw,
                biases: grad_out.to_vec(),
            },
            din,
        ))
    }
}
