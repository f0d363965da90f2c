//! Transformer module over per-pixel tokens, and its recursive wrapper.
//!
//! Each spatial position becomes one token (no positional encoding, so the
//! module commutes with spatial permutations). Attention has two value-
//! identical execution paths: a composite-op path used under a tape, and a
//! streaming row-at-a-time path used for plain evaluation, which never
//! materializes the L×L score matrix and therefore handles whole images.

use super::blocks::conv_fwd;
use super::params::{Builder, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::ops;
use crate::tensor::{Tape, Tensor};

pub fn linear_fwd(tape: Option<&Tape>, p: &ParamSet, name: &str, x: &Tensor) -> Result<Tensor> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    ops::linear(tape, x, &w, Some(&b))
}

pub fn norm_fwd(tape: Option<&Tape>, p: &ParamSet, name: &str, x: &Tensor) -> Result<Tensor> {
    let gamma = p.get(&format!("{name}.gamma"))?;
    let beta = p.get(&format!("{name}.beta"))?;
    ops::layer_norm(tape, x, &gamma, &beta)
}

/// `(N,D,H,W) → (N, H·W, D)` token view.
fn tokens(tape: Option<&Tape>, x: &Tensor) -> Result<Tensor> {
    let [n, d, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let t = ops::permute(tape, x, &[0, 2, 3, 1])?;
    ops::reshape(tape, &t, &[n, h * w, d])
}

/// Inverse of `tokens` for a known spatial extent.
fn untokens(tape: Option<&Tape>, t: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let [n, _l, d] = [t.shape()[0], t.shape()[1], t.shape()[2]];
    let grid = ops::reshape(tape, t, &[n, h, w, d])?;
    ops::permute(tape, &grid, &[0, 3, 1, 2])
}

/// Multi-head scaled dot-product attention. `q`/`k` are `(N,L,DQ)`, `v` is
/// `(N,L,DV)`; heads split the feature axes. Output is `(N,L,DV)`.
pub fn attention(tape: Option<&Tape>, q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
    let (dq, dv) = (q.shape()[2], v.shape()[2]);
    if q.shape() != k.shape() || q.shape()[..2] != v.shape()[..2] {
        return Err(Error::dim(
            "shape",
            format!("attention operands {:?}/{:?}/{:?} disagree", q.shape(), k.shape(), v.shape()),
        ));
    }
    if heads == 0 || dq % heads != 0 || dv % heads != 0 {
        return Err(Error::Config(format!(
            "attention heads {heads} must divide query width {dq} and value width {dv}"
        )));
    }
    match tape {
        Some(_) => attention_composite(tape, q, k, v, heads),
        None => attention_streaming(q, k, v, heads),
    }
}

/// Tape-friendly path built from recorded ops; materializes `(N,H,L,L)`.
fn attention_composite(tape: Option<&Tape>, q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
    let [n, l, dq] = [q.shape()[0], q.shape()[1], q.shape()[2]];
    let dv = v.shape()[2];
    let (hdq, hdv) = (dq / heads, dv / heads);
    let split_heads = |t: &Tensor, hd: usize| -> Result<Tensor> {
        let r = ops::reshape(tape, t, &[n, l, heads, hd])?;
        ops::permute(tape, &r, &[0, 2, 1, 3])
    };
    let qh = split_heads(q, hdq)?;
    let kh = split_heads(k, hdq)?;
    let vh = split_heads(v, hdv)?;
    let kt = ops::permute(tape, &kh, &[0, 1, 3, 2])?;
    let scores = ops::scale(tape, &ops::matmul_batched(tape, &qh, &kt)?, 1.0 / (hdq as f64).sqrt())?;
    let probs = ops::softmax(tape, &scores, 3)?;
    let ctx = ops::matmul_batched(tape, &probs, &vh)?;
    let merged = ops::permute(tape, &ctx, &[0, 2, 1, 3])?;
    ops::reshape(tape, &merged, &[n, l, dv])
}

/// Evaluation path: one score row at a time, O(L) extra memory per row.
/// Arithmetic matches the composite path operation for operation, so both
/// produce bit-identical outputs.
fn attention_streaming(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
    let [n, l, dq] = [q.shape()[0], q.shape()[1], q.shape()[2]];
    let dv = v.shape()[2];
    let (hdq, hdv) = (dq / heads, dv / heads);
    let scale = 1.0 / (hdq as f64).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![0.0; n * l * dv];
    let mut row = vec![0.0; l];
    for ni in 0..n {
        for h in 0..heads {
            for i in 0..l {
                let qb = (ni * l + i) * dq + h * hdq;
                let mut mx = f64::NEG_INFINITY;
                for (j, slot) in row.iter_mut().enumerate() {
                    let kb = (ni * l + j) * dq + h * hdq;
                    let mut acc = 0.0;
                    for t in 0..hdq {
                        acc += qd[qb + t] * kd[kb + t];
                    }
                    let s = acc * scale;
                    *slot = s;
                    if s > mx {
                        mx = s;
                    }
                }
                let mut sum = 0.0;
                for slot in row.iter_mut() {
                    let e = (*slot - mx).exp();
                    *slot = e;
                    sum += e;
                }
                for slot in row.iter_mut() {
                    *slot /= sum;
                }
                let ob = (ni * l + i) * dv + h * hdv;
                for (j, prob) in row.iter().enumerate() {
                    let vb = (ni * l + j) * dv + h * hdv;
                    for t in 0..hdv {
                        out[ob + t] += prob * vd[vb + t];
                    }
                }
            }
        }
    }
    Tensor::new(&[n, l, dv], out)
}

pub fn register_tm(
    b: &mut Builder,
    prefix: &str,
    c: usize,
    d: usize,
    qk_reduction: usize,
    mlp_ratio: usize,
) -> Result<()> {
    b.conv(&format!("{prefix}.embed"), d, c, 1)?;
    b.layer_norm(&format!("{prefix}.norm1"), d)?;
    b.linear(&format!("{prefix}.attn.q"), d / qk_reduction, d)?;
    b.linear(&format!("{prefix}.attn.k"), d / qk_reduction, d)?;
    b.linear(&format!("{prefix}.attn.v"), d, d)?;
    b.linear(&format!("{prefix}.attn.out"), d, d)?;
    b.layer_norm(&format!("{prefix}.norm2"), d)?;
    b.linear(&format!("{prefix}.mlp.fc1"), mlp_ratio * d, d)?;
    b.linear(&format!("{prefix}.mlp.fc2"), d, mlp_ratio * d)?;
    b.conv(&format!("{prefix}.unembed"), c, d, 1)
}

/// Pre-norm attention + MLP over per-pixel tokens, written in delta form:
/// the module returns `x + unembed(a + m)` where `a` and `m` are the
/// attention and MLP contributions. With the two output projections zeroed
/// the module is exactly the identity, and repeated application (recursion)
/// reuses these same parameters.
pub fn tm_fwd(tape: Option<&Tape>, p: &ParamSet, prefix: &str, x: &Tensor, heads: usize) -> Result<Tensor> {
    let [h, w] = [x.shape()[2], x.shape()[3]];
    let emb = conv_fwd(tape, p, &format!("{prefix}.embed"), x, 1)?;
    let tok = tokens(tape, &emb)?;
    let t1 = norm_fwd(tape, p, &format!("{prefix}.norm1"), &tok)?;
    let q = linear_fwd(tape, p, &format!("{prefix}.attn.q"), &t1)?;
    let k = linear_fwd(tape, p, &format!("{prefix}.attn.k"), &t1)?;
    let v = linear_fwd(tape, p, &format!("{prefix}.attn.v"), &t1)?;
    let ctx = attention(tape, &q, &k, &v, heads)?;
    let a = linear_fwd(tape, p, &format!("{prefix}.attn.out"), &ctx)?;
    let h1 = ops::add(tape, &tok, &a)?;
    let t2 = norm_fwd(tape, p, &format!("{prefix}.norm2"), &h1)?;
    let m1 = ops::gelu(tape, &linear_fwd(tape, p, &format!("{prefix}.mlp.fc1"), &t2)?)?;
    let m = linear_fwd(tape, p, &format!("{prefix}.mlp.fc2"), &m1)?;
    let delta = ops::add(tape, &a, &m)?;
    let dmap = untokens(tape, &delta, h, w)?;
    let up = conv_fwd(tape, p, &format!("{prefix}.unembed"), &dmap, 1)?;
    ops::add(tape, x, &up)
}

#[allow(clippy::too_many_arguments)]
pub fn register_rt(
    b: &mut Builder,
    c: usize,
    d: usize,
    qk_reduction: usize,
    mlp_ratio: usize,
    tm_count: usize,
    rt_enabled: bool,
) -> Result<()> {
    for j in 0..tm_count {
        if rt_enabled {
            register_tm(b, &format!("rt.tm{j}"), c, d, qk_reduction, mlp_ratio)?;
        }
        b.conv(&format!("rt.conv{j}"), c, c, 3)?;
    }
    Ok(())
}

/// Each transformer module runs `recursions + 1` times through the same
/// parameters, followed by a plain 3×3 convolution. With the transformer
/// stage disabled only the convolutions remain.
pub fn rt_fwd(
    tape: Option<&Tape>,
    p: &ParamSet,
    x: &Tensor,
    heads: usize,
    recursions: usize,
    tm_count: usize,
    rt_enabled: bool,
) -> Result<Tensor> {
    let mut t = x.clone();
    for j in 0..tm_count {
        if rt_enabled {
            for _ in 0..=recursions {
                t = tm_fwd(tape, p, &format!("rt.tm{j}"), &t, heads)?;
            }
        }
        t = conv_fwd(tape, p, &format!("rt.conv{j}"), &t, 1)?;
    }
    Ok(t)
}
