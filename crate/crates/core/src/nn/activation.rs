//! Pointwise nonlinearities and the softmax / cross-entropy pair.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Upstream gradient masked by `pre_activation > 0`.
pub fn relu_backward<T: Scalar>(pre_activation: &[T], grad_out: &[T]) -> Vec<T> {
    pre_activation
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect()
}

fn check_finite<T: Scalar>(scores: &[T]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::rejected("softmax of an empty vector"));
    }
    if let Some(i) = scores.iter().position(|x| !x.is_finite()) {
        return Err(Error::rejected(format!("non-finite score at index {i}")));
    }
    Ok(())
}

/// Max-subtracted softmax with a 64-bit normalizer.
pub fn softmax<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    check_finite(scores)?;
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|&s| (s - max).to_f64_lossy().exp())
        .collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| T::lit(e / total)).collect())
}

/// `log(softmax(scores))`, finite even where the softmax underflows.
pub fn log_softmax<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    check_finite(scores)?;
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let lse: f64 = scores
        .iter()
        .map(|&s| (s - max).to_f64_lossy().exp())
        .sum::<f64>()
        .ln();
    Ok(scores
        .iter()
        .map(|&s| T::lit((s - max).to_f64_lossy() - lse))
        .collect())
}

const DISTRIBUTION_TOL: f64 = 1e-4;

fn check_target<T: Scalar>(target: &[T], len: usize) -> Result<()> {
    if target.len() != len {
        return Err(Error::rejected(format!(
            "target has {} entries, prediction {len}",
            target.len()
        )));
    }
    if target.iter().any(|&t| !(t >= T::zero()) || !t.is_finite()) {
        return Err(Error::rejected("target has negative or non-finite mass"));
    }
    let total: f64 = target.iter().map(|t| t.to_f64_lossy()).sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::rejected(format!(
            "target is not a distribution (sums to {total})"
        )));
    }
    Ok(())
}

/// Loss and its gradient with respect to the pre-softmax scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grad: Vec<T>,
}

/// `-Σ target·ln(pred)` for a softmax output `pred`; the returned gradient is
/// with respect to the scores that produced `pred`, i.e. `pred - target`.
pub fn cross_entropy<T: Scalar>(pred: &[T], target: &[T]) -> Result<LossGrad<T>> {
    check_target(target, pred.len())?;
    let mut loss = 0.0f64;
    for (&p, &t) in pred.iter().zip(target) {
        if t > T::zero() {
            loss -= t.to_f64_lossy() * p.to_f64_lossy().ln();
        }
    }
    Ok(LossGrad {
        loss: T::lit(loss),
        grad: pred.iter().zip(target).map(|(&p, &t)| p - t).collect(),
    })
}

/// Fused softmax + cross-entropy on raw scores.
pub fn softmax_cross_entropy<T: Scalar>(scores: &[T], target: &[T]) -> Result<LossGrad<T>> {
    check_target(target, scores.len())?;
    let log_p = log_softmax(scores)?;
    let mut loss = 0.0f64;
    for (&lp, &t) in log_p.iter().zip(target) {
        if t > T::zero() {
            loss -= t.to_f64_lossy() * lp.to_f64_lossy();
        }
    }
    Ok(LossGrad {
        loss: T::lit(loss),
        grad: log_p
            .iter()
            .zip(target)
            .map(|(&lp, &t)| lp.exp() - t)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_examples() {
        let t = Tensor::<f32>::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::<f32>::from_vec(&[4], vec![-1.0, -0.5, -3.0, -1e-9]).unwrap();
        assert!(relu(&neg).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn relu_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // keep inputs away from the kink so h = 1e-3 never crosses it
        let x: Vec<f64> = (0..32)
            .map(|_| {
                let v: f64 = rng.gen_range(0.01..2.0);
                if rng.gen() { v } else { -v }
            })
            .collect();
        let up: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic = relu_backward(&x, &up);
        let h = 1e-3;
        let f = |x: &[f64]| -> f64 {
            let t = Tensor::from_vec(&[x.len()], x.to_vec()).unwrap();
            relu(&t).data().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((numeric - analytic[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_constant_is_uniform() {
        for c in [-50.0f32, 0.0, 3.0, 1e4] {
            let p = softmax(&[c; 4]).unwrap();
            for v in p {
                assert!((v - 0.25).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn softmax_large_gap_does_not_overflow() {
        let p = softmax(&[1000.0f32, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-7);
        assert!(p[1] >= 0.0 && p[1] < 1e-30);
    }

    #[test]
    fn softmax_random_matches_f64_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f32> = (0..1369).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let p = softmax(&s).unwrap();
        let sum: f64 = p.iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        let z: f64 = s.iter().map(|&v| (v as f64).exp()).sum();
        for (&pi, &si) in p.iter().zip(&s) {
            assert!((pi as f64 - (si as f64).exp() / z).abs() < 1e-6);
        }
        let argmax = |v: &[f32]| {
            v.iter()
                .enumerate()
                .fold((0, f32::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
                .0
        };
        assert_eq!(argmax(&p), argmax(&s));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[1.0f32, f32::NAN]).is_err());
        assert!(softmax(&[f32::INFINITY]).is_err());
        assert!(softmax::<f32>(&[]).is_err());
    }

    #[test]
    fn cross_entropy_uniform_one_hot() {
        let k = 1369;
        let pred = vec![1.0f64 / k as f64; k];
        let mut target = vec![0.0; k];
        target[700] = 1.0;
        let lg = cross_entropy(&pred, &target).unwrap();
        assert!((lg.loss - (k as f64).ln()).abs() < 1e-9);
        assert!((lg.loss - 7.2219).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_of_target_with_itself_is_entropy() {
        let t = [0.2f64, 0.3, 0.5];
        let lg = cross_entropy(&t, &t).unwrap();
        let h: f64 = -t.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((lg.loss - h).abs() < 1e-12);
        let one_hot = [0.0f64, 1.0, 0.0];
        assert_eq!(cross_entropy(&one_hot, &one_hot).unwrap().loss, 0.0);
        assert!(lg.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let scores: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let raw: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let target: Vec<f64> = raw.iter().map(|r| r / z).collect();
        let lg = cross_entropy(&softmax(&scores).unwrap(), &target).unwrap();
        let fused = softmax_cross_entropy(&scores, &target).unwrap();
        assert!((lg.loss - fused.loss).abs() < 1e-12);
        let h = 1e-3;
        for i in 0..scores.len() {
            let mut sp = scores.clone();
            let mut sm = scores.clone();
            sp[i] += h;
            sm[i] -= h;
            let lp = cross_entropy(&softmax(&sp).unwrap(), &target).unwrap().loss;
            let lm = cross_entropy(&softmax(&sm).unwrap(), &target).unwrap().loss;
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (numeric - lg.grad[i]).abs() / numeric.abs().max(lg.grad[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "index {i}: rel err {rel}");
            assert!((fused.grad[i] - lg.grad[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_targets() {
        assert!(cross_entropy(&[0.5f32, 0.5], &[1.0]).is_err());
        assert!(cross_entropy(&[0.5f32, 0.5], &[0.7, 0.7]).is_err());
        assert!(cross_entropy(&[0.5f32, 0.5], &[1.5, -0.5]).is_err());
    }
}
