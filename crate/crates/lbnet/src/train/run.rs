//! Step driver: sample a patch batch, run forward/backward, apply Adam under
//! the cosine schedule.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::adam::Adam;
use super::loss::l1_loss;
use super::schedule::cosine_lr;
use crate::data::{sample_patch_pair, Image};
use crate::error::{Error, Result};
use crate::model::LBNet;
use crate::tensor::Tape;

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub lr_max: f64,
    pub lr_min: f64,
    /// Schedule length; the cosine anneals over this many steps.
    pub total_steps: usize,
    pub batch_size: usize,
    /// Low-resolution patch side; the HR crop is `patch * scale` square.
    pub patch: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr_max: 2e-4,
            lr_min: 6.25e-6,
            total_steps: 500,
            batch_size: 16,
            patch: 48,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Run the steps in `steps` against the schedule in `options`, reporting
/// each step to `sink` and returning the full log. Every step draws its
/// batch from its own RNG stream, so running `0..4` in one call is bitwise
/// identical to running `0..2` then `2..4` with the same options.
pub fn train(
    model: &mut LBNet,
    opt: &mut Adam,
    images: &[Image],
    options: &TrainOptions,
    steps: Range<usize>,
    mut sink: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    if images.is_empty() {
        return Err(Error::Config("no training images".to_string()));
    }
    if options.batch_size == 0 || options.patch == 0 {
        return Err(Error::Config("batch_size and patch must be positive".to_string()));
    }
    let scale = model.config().scale;
    let mut logs = Vec::new();
    for step in steps {
        let lr = cosine_lr(step, options.total_steps, options.lr_max, options.lr_min);
        let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
        rng.set_stream(step as u64 + 1);
        let mut lr_patches = Vec::with_capacity(options.batch_size);
        let mut hr_patches = Vec::with_capacity(options.batch_size);
        for _ in 0..options.batch_size {
            let idx = rng.gen_range(0..images.len());
            let (lo, hi) = sample_patch_pair(&images[idx], scale, options.patch, &mut rng)?;
            lr_patches.push(lo);
            hr_patches.push(hi);
        }
        let lr_batch = Image::batch_to_tensor(&lr_patches)?;
        let hr_batch = Image::batch_to_tensor(&hr_patches)?;
        model.params().zero_grads();
        let tape = Tape::new();
        let pred = model.forward(Some(&tape), &lr_batch)?;
        let loss_t = l1_loss(Some(&tape), &pred, &hr_batch)?;
        let loss = loss_t.data()[0];
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss {loss} at step {step}")));
        }
        tape.backward(&loss_t)?;
        opt.step(model.params_mut(), lr)?;
        let log = StepLog { step, lr, loss };
        sink(&log);
        logs.push(log);
    }
    Ok(logs)
}
