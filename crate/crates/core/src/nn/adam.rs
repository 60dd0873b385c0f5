//! Adam with L2 weight decay and a two-part learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Per-iteration inverse decay: `lr / (1 + decay * iteration)`.
    pub lr_decay: f64,
    pub weight_decay: f64,
    /// Adam's first-moment coefficient.
    pub momentum: f64,
    pub step_factor: f64,
    pub step_interval: u32,
    pub step_start: u32,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Tracker settings: lr 1e-2, decay 1e-7, weight decay 1e-4, momentum
    /// 0.9, ×0.2 every 30 epochs after epoch 120.
    pub fn tracker() -> Self {
        TrainConfig {
            base_lr: 1e-2,
            lr_decay: 1e-7,
            weight_decay: 1e-4,
            momentum: 0.9,
            step_factor: 0.2,
            step_interval: 30,
            step_start: 120,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }

    /// Score-head settings: lr 1e-3, decay 1e-7, weight decay 1e-5,
    /// momentum 0.85, ×0.1 every 30 epochs after epoch 120.
    pub fn score_head() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            lr_decay: 1e-7,
            weight_decay: 1e-5,
            momentum: 0.85,
            step_factor: 0.1,
            ..Self::tracker()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("base_lr", self.base_lr),
            ("lr_decay", self.lr_decay),
            ("weight_decay", self.weight_decay),
            ("momentum", self.momentum),
            ("step_factor", self.step_factor),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.momentum >= 1.0 {
            return Err(Error::config("momentum must be < 1"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Effective learning rate at `epoch` (0-based) after `iteration`
/// optimizer steps.
pub fn lr_schedule(config: &TrainConfig, epoch: u32, iteration: u64) -> f64 {
    let per_iter = config.base_lr / (1.0 + config.lr_decay * iteration as f64);
    let steps = if config.step_interval == 0 || epoch < config.step_start {
        0
    } else {
        (epoch - config.step_start) / config.step_interval
    };
    per_iter * config.step_factor.powi(steps as i32)
}

/// First and second moments for every parameter slice, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(layout: &[&[T]]) -> Self {
        let zeros: Vec<Vec<T>> = layout.iter().map(|s| vec![T::zero(); s.len()]).collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    /// One Adam step over `params` using `grads` (same layout), returning the
    /// learning rate used.
    pub fn update(
        &mut self,
        params: &mut [&mut [T]],
        grads: &[Vec<T>],
        config: &TrainConfig,
        epoch: u32,
    ) -> Result<f64> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::rejected(format!(
                "adam: {} parameter slices, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first[i].len() {
                return Err(Error::rejected(format!(
                    "adam: slice {i} has {} params, {} grads, {} moments",
                    p.len(),
                    g.len(),
                    self.first[i].len()
                )));
            }
        }

        let lr = lr_schedule(config, epoch, self.step);
        self.step += 1;
        let t = self.step as i32;
        let b1 = config.momentum;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        // Bias corrections folded into the step size.
        let step_size = T::lit(lr * c2.sqrt() / c1);
        let eps_hat = T::lit(EPSILON * c2.sqrt());
        let (b1, b2, wd) = (T::lit(b1), T::lit(BETA2), T::lit(config.weight_decay));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..p.len() {
                let grad = g[j] + wd * p[j];
                m[j] = b1 * m[j] + one_b1 * grad;
                v[j] = b2 * v[j] + one_b2 * grad * grad;
                p[j] -= step_size * m[j] / (v[j].sqrt() + eps_hat);
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let t = TrainConfig::tracker();
        assert_eq!((t.base_lr, t.lr_decay, t.weight_decay, t.momentum), (1e-2, 1e-7, 1e-4, 0.9));
        let s = TrainConfig::score_head();
        assert_eq!((s.base_lr, s.lr_decay, s.weight_decay, s.momentum), (1e-3, 1e-7, 1e-5, 0.85));
        assert_eq!(s.step_factor, 0.1);
    }

    #[test]
    fn schedule_examples() {
        let t = TrainConfig::tracker();
        assert_eq!(lr_schedule(&t, 0, 0), 1e-2);
        let it = 12_345;
        let per_iter = 1e-2 / (1.0 + 1e-7 * it as f64);
        assert!((lr_schedule(&t, 149, it) - per_iter).abs() < 1e-18);
        assert!((lr_schedule(&t, 150, it) - per_iter * 0.2).abs() < 1e-15);
        let s = TrainConfig::score_head();
        let per_iter = 1e-3 / (1.0 + 1e-7 * it as f64);
        assert!((lr_schedule(&s, 180, it) - per_iter * 0.01).abs() < 1e-15);
        assert_eq!(lr_schedule(&s, 120, 0), 1e-3);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            lr_decay: 0.0,
            ..TrainConfig::tracker()
        };
        for g in [0.37f64, -4.0] {
            let mut p = [0.0f64];
            let mut state = AdamState::new(&[&p[..]]);
            state.update(&mut [&mut p[..]], &[vec![g]], &cfg, 0).unwrap();
            assert!((p[0] + cfg.base_lr * g.signum()).abs() < 1e-9, "{}", p[0]);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::tracker()
        };
        let mut p = [1.0f32, -2.0, 3.0];
        let mut state = AdamState::new(&[&p[..]]);
        for _ in 0..3 {
            state.update(&mut [&mut p[..]], &[vec![0.0; 3]], &cfg, 0).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn two_steps_match_textbook_recurrence() {
        let cfg = TrainConfig {
            base_lr: 0.1,
            lr_decay: 0.5,
            weight_decay: 0.01,
            momentum: 0.9,
            ..TrainConfig::tracker()
        };
        let mut p = [0.5f64, -1.0, 2.0];
        let grads = [[0.2f64, -0.1, 0.4], [-0.3, 0.05, 0.1]];

        // Written out from the textbook form with explicit m̂ and v̂.
        let mut q = p;
        let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
        for (t, g) in grads.iter().enumerate() {
            let lr = 0.1 / (1.0 + 0.5 * t as f64);
            for j in 0..3 {
                let gj = g[j] + 0.01 * q[j];
                m[j] = 0.9 * m[j] + 0.1 * gj;
                v[j] = 0.999 * v[j] + 0.001 * gj * gj;
                let mh = m[j] / (1.0 - 0.9f64.powi(t as i32 + 1));
                let vh = v[j] / (1.0 - 0.999f64.powi(t as i32 + 1));
                q[j] -= lr * mh / (vh.sqrt() + 1e-8);
            }
        }

        let mut state = AdamState::new(&[&p[..]]);
        for g in &grads {
            state.update(&mut [&mut p[..]], &[g.to_vec()], &cfg, 0).unwrap();
        }
        for j in 0..3 {
            assert!((p[j] - q[j]).abs() < 1e-7, "{} vs {}", p[j], q[j]);
        }
        assert_eq!(state.step, 2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = [0.0f32; 2];
        let mut state = AdamState::new(&[&p[..]]);
        let err = state.update(&mut [&mut p[..]], &[vec![0.0; 3]], &TrainConfig::tracker(), 0);
        assert!(matches!(err, Err(Error::RejectedInput(_))));
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::tracker();
        assert!(c.validate().is_ok());
        c.epochs = 0;
        assert!(c.validate().is_err());
        c = TrainConfig::tracker();
        c.base_lr = -1.0;
        assert!(c.validate().is_err());
        c = TrainConfig::tracker();
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
