use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_target_distribution, correlate, tracker_loss, NetworkParams, ScoreMap, SearchFeatureMap,
    TemplateFeature, TrackingSample, CELLS,
};
use crate::error::{Error, Result};
use crate::nn::{AdamState, ParamGrads, Sequential, TrainConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub mean_loss: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

/// Summed per-sample gradients for one mini-batch.
pub type BatchGrads<T> = (f64, ParamGrads<T>);

/// Tracker loss and conv-stack gradients for one sample; gradients from both
/// branches are summed into the shared parameters.
pub fn sample_loss_and_grads<T: Scalar>(
    conv: &Sequential<T>,
    sample: &TrackingSample,
) -> Result<(f64, ParamGrads<T>)> {
    let template = sample.template_tensor::<T>();
    let search = sample.search_tensor::<T>();
    let (t_out, t_cache) = conv.forward_cached(&template)?;
    let (s_out, s_cache) = conv.forward_cached(&search)?;
    let channels = t_out.len();
    let tf = TemplateFeature(t_out.into_data());
    let sf = SearchFeatureMap {
        channels,
        data: s_out.into_data(),
    };
    let score: ScoreMap<T> = correlate(&tf, &sf)?;
    let target = build_target_distribution::<T>(sample.displacement())?;
    let lg = tracker_loss(&score, &target)?;

    // d/dtemplate[ch] = Σ_cell g[cell]·search[ch, cell]
    let mut d_template = vec![T::zero(); channels];
    T::gemm(
        channels, CELLS, 1, T::one(), &sf.data, CELLS as isize, 1, &lg.grad, 1, 1, T::zero(),
        &mut d_template, 1, 1,
    );
    // d/dsearch[ch, cell] = template[ch]·g[cell]
    let mut d_search = vec![T::zero(); channels * CELLS];
    T::gemm(
        channels, 1, CELLS, T::one(), &tf.0, 1, 1, &lg.grad, CELLS as isize, 1, T::zero(),
        &mut d_search, CELLS as isize, 1,
    );

    let (mut grads, _) = conv.backward(&t_cache, &d_template, &[], false)?;
    let (gs, _) = conv.backward(&s_cache, &d_search, &[], false)?;
    grads.add_assign(&gs);
    Ok((lg.loss.to_f64_lossy(), grads))
}

/// Mini-batch Adam over `count` items. `grad_fn(stack, i)` returns the loss
/// and gradients of item `i`; per-batch gradients are averaged in item order
/// so results do not depend on the worker count.
pub(crate) fn run_epochs<T, F>(
    stack: &mut Sequential<T>,
    count: usize,
    config: &TrainConfig,
    grad_fn: F,
) -> Result<Vec<EpochLog>>
where
    T: Scalar,
    F: Fn(&Sequential<T>, usize) -> Result<(f64, ParamGrads<T>)> + Sync,
{
    config.validate()?;
    if count == 0 {
        return Err(Error::config("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(&stack.param_slices());
    let mut order: Vec<usize> = (0..count).collect();
    let mut log = Vec::with_capacity(config.epochs as usize);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            let current: &Sequential<T> = stack;
            let results: Vec<Result<(f64, ParamGrads<T>)>> =
                batch.par_iter().map(|&i| grad_fn(current, i)).collect();
            let mut sum = stack.zero_grads();
            for r in results {
                let (loss, g) = r?;
                total += loss;
                sum.add_assign(&g);
            }
            sum.scale(T::one() / T::lit(batch.len() as f64));
            lr = state.update(&mut stack.param_slices_mut(), &sum.0, config, epoch)?;
        }
        let mean_loss = total / count as f64;
        log::info!("epoch {epoch}: mean loss {mean_loss:.5}, lr {lr:.3e}");
        log.push(EpochLog {
            epoch,
            mean_loss,
            lr,
        });
    }
    Ok(log)
}

/// Trains the shared conv stack on tracking samples; heads are untouched.
pub fn train_tracker<T: Scalar>(
    params: &mut NetworkParams<T>,
    samples: &[TrackingSample],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    run_epochs(&mut params.conv, samples.len(), config, |conv, i| {
        sample_loss_and_grads(conv, &samples[i])
    })
}
