//! CNN-side blocks: attention gates, the residual attention block, and the
//! feature fusion module built from three of them.

use super::params::{Builder, ParamSet};
use crate::error::Result;
use crate::tensor::ops::{self, PoolKind};
use crate::tensor::{Tape, Tensor};

/// Convolution through named parameters; padding keeps spatial size for the
/// odd kernels used throughout.
pub fn conv_fwd(
    tape: Option<&Tape>,
    p: &ParamSet,
    name: &str,
    x: &Tensor,
    groups: usize,
) -> Result<Tensor> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    let k = w.shape()[2];
    ops::conv2d(tape, x, &w, Some(&b), 1, k / 2, groups)
}

// ── channel attention (squeeze–excite over pooled channels) ──────────────

pub fn register_ca(b: &mut Builder, prefix: &str, c: usize, reduction: usize) -> Result<()> {
    b.conv(&format!("{prefix}.squeeze"), c / reduction, c, 1)?;
    b.conv(&format!("{prefix}.excite"), c, c / reduction, 1)
}

/// Per-channel gate in `(N,C,1,1)`: sigmoid(excite(relu(squeeze(gap(x))))).
pub fn ca_gate(tape: Option<&Tape>, p: &ParamSet, prefix: &str, x: &Tensor) -> Result<Tensor> {
    let pooled = ops::pool_stats(tape, x, PoolKind::GlobalAvg)?;
    let s = ops::relu(tape, &conv_fwd(tape, p, &format!("{prefix}.squeeze"), &pooled, 1)?)?;
    ops::sigmoid(tape, &conv_fwd(tape, p, &format!("{prefix}.excite"), &s, 1)?)
}

pub fn ca_fwd(tape: Option<&Tape>, p: &ParamSet, prefix: &str, x: &Tensor) -> Result<Tensor> {
    let gate = ca_gate(tape, p, prefix, x)?;
    ops::mul(tape, x, &gate)
}

// ── spatial attention ────────────────────────────────────────────────────

pub fn register_sa(b: &mut Builder, prefix: &str, kernel: usize) -> Result<()> {
    b.conv(&format!("{prefix}.conv"), 1, 2, kernel)
}

/// Gate `x` by a position map derived from channel mean and max statistics.
pub fn sa_fwd(tape: Option<&Tape>, p: &ParamSet, prefix: &str, x: &Tensor) -> Result<Tensor> {
    let avg = ops::pool_stats(tape, x, PoolKind::ChannelAvg)?;
    let max = ops::pool_stats(tape, x, PoolKind::ChannelMax)?;
    let stats = ops::concat(tape, &[&avg, &max], 1)?;
    let map = ops::sigmoid(tape, &conv_fwd(tape, p, &format!("{prefix}.conv"), &stats, 1)?)?;
    ops::mul(tape, x, &map)
}

// ── feature refinement dual attention block ──────────────────────────────

pub fn register_frdab(
    b: &mut Builder,
    prefix: &str,
    c: usize,
    ca_reduction: usize,
    sa_kernel: usize,
) -> Result<()> {
    let half = c / 2;
    b.conv(&format!("{prefix}.branch_a.conv0"), half, c, 3)?;
    b.conv(&format!("{prefix}.branch_b.conv0"), half, c, 3)?;
    b.conv(&format!("{prefix}.branch_b.conv1"), half, half, 3)?;
    b.conv(&format!("{prefix}.branch_b.conv2"), half, half, 3)?;
    b.conv(&format!("{prefix}.refine.conv0"), c, c, 3)?;
    b.conv(&format!("{prefix}.refine.conv1"), c, c, 3)?;
    register_ca(b, &format!("{prefix}.ca"), c, ca_reduction)?;
    register_sa(b, &format!("{prefix}.sa"), sa_kernel)
}

/// Two halved branches (one shallow, one deep) rejoined, refined, then gated
/// through channel and spatial attention in parallel, all under a residual.
pub fn frdab_fwd(tape: Option<&Tape>, p: &ParamSet, prefix: &str, x: &Tensor) -> Result<Tensor> {
    let a = ops::relu(tape, &conv_fwd(tape, p, &format!("{prefix}.branch_a.conv0"), x, 1)?)?;
    let mut br = x.clone();
    for i in 0..3 {
        br = ops::relu(tape, &conv_fwd(tape, p, &format!("{prefix}.branch_b.conv{i}"), &br, 1)?)?;
    }
    let u = ops::concat(tape, &[&a, &br], 1)?;
    let v = ops::relu(tape, &conv_fwd(tape, p, &format!("{prefix}.refine.conv0"), &u, 1)?)?;
    let v = ops::relu(tape, &conv_fwd(tape, p, &format!("{prefix}.refine.conv1"), &v, 1)?)?;
    let ca_out = ca_fwd(tape, p, &format!("{prefix}.ca"), &v)?;
    let sa_out = sa_fwd(tape, p, &format!("{prefix}.sa"), &v)?;
    let gated = ops::add(tape, &ca_out, &sa_out)?;
    ops::add(tape, x, &gated)
}

// ── local feature fusion module ──────────────────────────────────────────

pub fn register_lffm(
    b: &mut Builder,
    prefix: &str,
    c: usize,
    ca_reduction: usize,
    sa_kernel: usize,
) -> Result<()> {
    for i in 0..3 {
        register_frdab(b, &format!("{prefix}.frdab.{i}"), c, ca_reduction, sa_kernel)?;
    }
    // grouped 1x1 reducers for the densely concatenated states
    b.conv(&format!("{prefix}.reduce.0"), c, c, 1)?; // 2c -> c, groups 2
    b.conv(&format!("{prefix}.reduce.1"), c, 3 * c / 2, 1)?; // 3c -> c, groups 2
    b.conv(&format!("{prefix}.fuse"), c, 4 * c, 1) // 4c -> c
}

/// Three chained blocks with dense reuse of earlier states; each chain input
/// is the grouped 1x1 reduction of everything produced so far, and the
/// module output fuses all four states under a residual.
pub fn lffm_fwd(tape: Option<&Tape>, p: &ParamSet, prefix: &str, x: &Tensor) -> Result<Tensor> {
    let f1 = frdab_fwd(tape, p, &format!("{prefix}.frdab.0"), x)?;
    let cat2 = ops::concat(tape, &[x, &f1], 1)?;
    let x2 = conv_fwd(tape, p, &format!("{prefix}.reduce.0"), &cat2, 2)?;
    let f2 = frdab_fwd(tape, p, &format!("{prefix}.frdab.1"), &x2)?;
    let cat3 = ops::concat(tape, &[x, &f1, &f2], 1)?;
    let x3 = conv_fwd(tape, p, &format!("{prefix}.reduce.1"), &cat3, 2)?;
    let f3 = frdab_fwd(tape, p, &format!("{prefix}.frdab.2"), &x3)?;
    let all = ops::concat(tape, &[x, &f1, &f2, &f3], 1)?;
    let fused = conv_fwd(tape, p, &format!("{prefix}.fuse"), &all, 1)?;
    ops::add(tape, x, &fused)
}
