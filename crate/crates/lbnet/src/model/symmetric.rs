//! Symmetric CNN trunk: a top pass of fusion modules and a mirrored down
//! pass that reuses the same module parameters, stitched together by
//! channel-attention bridges and a final fusion of the down-pass states.

use super::blocks::{ca_fwd, conv_fwd, lffm_fwd, register_ca, register_lffm};
use super::params::{Builder, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::ops::{self, PoolKind};
use crate::tensor::{Tape, Tensor};

/// How the fused down-pass states are gated before the trunk residual.
/// The gates are parameter-free statistics of the fused map itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMode {
    /// Straight feed-forward: no gate.
    Ff,
    /// Channel gate: sigmoid of the per-channel spatial mean.
    Ca,
    /// Spatial gate: sigmoid of the per-position channel mean.
    Sa,
}

impl FusionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ff" => Ok(FusionMode::Ff),
            "ca" => Ok(FusionMode::Ca),
            "sa" => Ok(FusionMode::Sa),
            other => Err(Error::Config(format!("fusion_mode must be ff, ca, or sa, got {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FusionMode::Ff => "ff",
            FusionMode::Ca => "ca",
            FusionMode::Sa => "sa",
        }
    }
}

pub fn register_symmetric(
    b: &mut Builder,
    c: usize,
    n_lffm: usize,
    ca_reduction: usize,
    sa_kernel: usize,
    share_down_weights: bool,
) -> Result<()> {
    for i in 0..n_lffm {
        register_lffm(b, &format!("lffm.{i}"), c, ca_reduction, sa_kernel)?;
    }
    if !share_down_weights {
        // diagnostic configuration: give the down pass its own modules
        for i in 0..n_lffm {
            register_lffm(b, &format!("lffm_down.{i}"), c, ca_reduction, sa_kernel)?;
        }
    }
    for i in 0..n_lffm {
        register_ca(b, &format!("bridge.{i}"), c, ca_reduction)?;
    }
    b.conv("fuse", c, n_lffm * c, 1)
}

pub fn symmetric_fwd(
    tape: Option<&Tape>,
    p: &ParamSet,
    x: &Tensor,
    n_lffm: usize,
    fusion_mode: FusionMode,
    share_down_weights: bool,
) -> Result<Tensor> {
    // top pass
    let mut top = Vec::with_capacity(n_lffm);
    let mut t = x.clone();
    for i in 0..n_lffm {
        t = lffm_fwd(tape, p, &format!("lffm.{i}"), &t)?;
        top.push(t.clone());
    }
    // down pass through the same modules; stage i sees the previous down
    // state plus the bridged top state of matching depth
    let mut down = Vec::with_capacity(n_lffm);
    let mut prev = top[n_lffm - 1].clone();
    for (i, top_state) in top.iter().enumerate() {
        let bridged = ca_fwd(tape, p, &format!("bridge.{i}"), top_state)?;
        let stage_in = ops::add(tape, &prev, &bridged)?;
        let prefix = if share_down_weights { format!("lffm.{i}") } else { format!("lffm_down.{i}") };
        prev = lffm_fwd(tape, p, &prefix, &stage_in)?;
        down.push(prev.clone());
    }
    let refs: Vec<&Tensor> = down.iter().collect();
    let cat = ops::concat(tape, &refs, 1)?;
    let fused = conv_fwd(tape, p, "fuse", &cat, 1)?;
    let gated = match fusion_mode {
        FusionMode::Ff => fused,
        FusionMode::Ca => {
            let gate = ops::sigmoid(tape, &ops::pool_stats(tape, &fused, PoolKind::GlobalAvg)?)?;
            ops::mul(tape, &fused, &gate)?
        }
        FusionMode::Sa => {
            let gate = ops::sigmoid(tape, &ops::pool_stats(tape, &fused, PoolKind::ChannelAvg)?)?;
            ops::mul(tape, &fused, &gate)?
        }
    };
    ops::add(tape, x, &gated)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| next()).collect()).unwrap()
    }

    fn build(c: usize, n: usize, r: usize, share: bool) -> ParamSet {
        let mut b = Builder::new(0);
        register_symmetric(&mut b, c, n, r, 7, share).unwrap();
        b.finish()
    }

    #[test]
    fn trunk_parameter_budgets() {
        assert_eq!(build(32, 3, 4, true).total_elements(), 322_331);
        assert_eq!(build(18, 2, 2, true).total_elements(), 70_056);
    }

    #[test]
    fn unsharing_the_down_pass_exactly_doubles_module_parameters() {
        let shared = build(32, 3, 4, true);
        let unshared = build(32, 3, 4, false);
        let top = shared.elements_with_prefix("lffm.");
        assert_eq!(unshared.elements_with_prefix("lffm."), top);
        assert_eq!(unshared.elements_with_prefix("lffm_down."), top);
        assert_eq!(unshared.total_elements() - shared.total_elements(), top);
        assert_eq!(shared.elements_with_prefix("lffm_down."), 0);
    }

    #[test]
    fn forward_preserves_shape_on_nonsquare_input() {
        let p = build(8, 2, 4, true);
        let x = seeded(&[1, 8, 4, 6], 1);
        let y = symmetric_fwd(None, &p, &x, 2, FusionMode::Ca, true).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn fusion_modes_produce_distinct_outputs() {
        let p = build(8, 1, 4, true);
        let x = seeded(&[1, 8, 5, 5], 2);
        let ff = symmetric_fwd(None, &p, &x, 1, FusionMode::Ff, true).unwrap();
        let ca = symmetric_fwd(None, &p, &x, 1, FusionMode::Ca, true).unwrap();
        let sa = symmetric_fwd(None, &p, &x, 1, FusionMode::Sa, true).unwrap();
        assert_ne!(ff.data(), ca.data());
        assert_ne!(ff.data(), sa.data());
        assert_ne!(ca.data(), sa.data());
    }

    #[test]
    fn shared_and_unshared_start_from_different_down_weights() {
        // with separate down modules freshly drawn, outputs must differ
        let x = seeded(&[1, 8, 4, 4], 3);
        let ys = symmetric_fwd(None, &build(8, 2, 4, true), &x, 2, FusionMode::Ca, true).unwrap();
        let yu = symmetric_fwd(None, &build(8, 2, 4, false), &x, 2, FusionMode::Ca, false).unwrap();
        assert_ne!(ys.data(), yu.data());
    }
}
