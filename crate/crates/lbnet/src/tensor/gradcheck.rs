//! Central-difference gradient verification.
//!
//! `check_gradients` runs a closure twice per probed coordinate — once with a
//! tape to get analytic gradients, then with ±h perturbations for the
//! numeric estimate — and reports the worst relative error
//! `|analytic − numeric| / max(1, |analytic|)`.

use super::{Tape, Tensor};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Check every coordinate of every input. The closure must return a scalar.
pub fn check_gradients<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(Option<&Tape>, &[Tensor]) -> Result<Tensor>,
{
    check_gradients_with_step(inputs, DEFAULT_STEP, f)
}

/// As `check_gradients`, with an explicit finite-difference step.
pub fn check_gradients_with_step<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(Option<&Tape>, &[Tensor]) -> Result<Tensor>,
{
    run_check(inputs, h, f, |_, numel| (0..numel).collect())
}

/// Check a seeded random sample of coordinates per input tensor. Large blocks
/// are too expensive to probe exhaustively; sampling keeps whole-model checks
/// tractable while still touching every parameter tensor.
pub fn check_gradients_sampled<F>(inputs: &[Tensor], h: f64, per_tensor: usize, seed: u64, f: F) -> Result<f64>
where
    F: Fn(Option<&Tape>, &[Tensor]) -> Result<Tensor>,
{
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let plan: Vec<Vec<usize>> = inputs
        .iter()
        .map(|t| {
            let n = t.numel();
            if n <= per_tensor {
                (0..n).collect()
            } else {
                let mut picks: Vec<usize> = (0..per_tensor).map(|_| rng.gen_range(0..n)).collect();
                picks.sort_unstable();
                picks.dedup();
                picks
            }
        })
        .collect();
    run_check(inputs, h, f, move |ti, _| plan[ti].clone())
}

fn run_check<F, C>(inputs: &[Tensor], h: f64, f: F, coords_for: C) -> Result<f64>
where
    F: Fn(Option<&Tape>, &[Tensor]) -> Result<Tensor>,
    C: Fn(usize, usize) -> Vec<usize>,
{
    if h <= 0.0 {
        return Err(Error::Usage("gradient check step must be positive".to_string()));
    }
    let params: Vec<Tensor> = inputs
        .iter()
        .map(|t| if t.requires_grad() { t.clone() } else { t.to_param() })
        .collect();
    for p in &params {
        p.zero_grad();
    }
    let tape = Tape::new();
    let loss = f(Some(&tape), &params)?;
    if loss.numel() != 1 {
        return Err(Error::Usage(format!(
            "gradient check needs a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    tape.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval_scalar = |probe: &[Tensor]| -> Result<f64> {
        let out = f(None, probe)?;
        if out.numel() != 1 {
            return Err(Error::Usage(format!(
                "gradient check needs a scalar loss, got shape {:?}",
                out.shape()
            )));
        }
        Ok(out.data()[0])
    };

    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        for ei in coords_for(pi, p.numel()) {
            let mut probe: Vec<Tensor> = params.clone();
            let mut bumped = p.data().to_vec();
            bumped[ei] += h;
            probe[pi] = Tensor::new(p.shape(), bumped)?;
            let fp = eval_scalar(&probe)?;
            let mut dipped = p.data().to_vec();
            dipped[ei] -= h;
            probe[pi] = Tensor::new(p.shape(), dipped)?;
            let fm = eval_scalar(&probe)?;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[pi][ei];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            if !rel.is_finite() {
                return Err(Error::Numerical(format!(
                    "gradient check produced a non-finite comparison at tensor {pi}, element {ei}"
                )));
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
