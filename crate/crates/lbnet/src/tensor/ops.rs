//! Differentiable operations.
//!
//! Every op takes `tape: Option<&Tape>` first. With a tape attached and at
//! least one tracked input, the op records a reverse closure; with `None` it
//! is a plain value computation. All loops are written with a fixed
//! accumulation order per output element, so results do not depend on how the
//! surrounding code schedules work.
//!
//! Binary elementwise ops accept equal shapes, or an `(N,C,1,1)` /
//! `(N,1,H,W)` attention map broadcast against an `(N,C,H,W)` feature map.

use super::{Tape, Tensor};
use crate::error::{Error, Result};

// ── recording helper ─────────────────────────────────────────────────────

fn maybe_record<F>(tape: Option<&Tape>, inputs: &[&Tensor], out: &Tensor, vjp: F)
where
    F: Fn(&[f64]) -> Vec<(Tensor, Vec<f64>)> + 'static,
{
    if let Some(t) = tape {
        if inputs.iter().any(|x| t.tracks(x)) {
            t.record(out, Box::new(vjp));
        }
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            "shape",
            format!("{op}: operand shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

// ── elementwise binary ops with attention-map broadcasting ───────────────

#[derive(Clone, Copy, PartialEq)]
enum MapKind {
    /// `(N,C,1,1)` gate broadcast over spatial positions.
    Channel,
    /// `(N,1,H,W)` gate broadcast over channels.
    Spatial,
}

/// How a binary op pairs its operands: equal shapes, or map ⊗ feature-map.
enum Pairing {
    Same,
    /// `(small_is_lhs, kind)`; the "big" operand is `(N,C,H,W)`.
    Broadcast(bool, MapKind),
}

fn classify_pair(op: &str, a: &Tensor, b: &Tensor) -> Result<Pairing> {
    if a.shape() == b.shape() {
        return Ok(Pairing::Same);
    }
    let try_map = |small: &Tensor, big: &Tensor| -> Option<MapKind> {
        if small.rank() != 4 || big.rank() != 4 {
            return None;
        }
        let (s, g) = (small.shape(), big.shape());
        if s[0] != g[0] {
            return None;
        }
        if s[1] == g[1] && s[2] == 1 && s[3] == 1 {
            Some(MapKind::Channel)
        } else if s[1] == 1 && s[2] == g[2] && s[3] == g[3] {
            Some(MapKind::Spatial)
        } else {
            None
        }
    };
    if let Some(kind) = try_map(b, a) {
        return Ok(Pairing::Broadcast(false, kind));
    }
    if let Some(kind) = try_map(a, b) {
        return Ok(Pairing::Broadcast(true, kind));
    }
    Err(Error::dim(
        "shape",
        format!(
            "{op}: shapes {:?} and {:?} are neither equal nor an (N,C,1,1)/(N,1,H,W) \
             map against (N,C,H,W)",
            a.shape(),
            b.shape()
        ),
    ))
}

/// Flat index of the map element gating feature position `(n,c,h,w)`.
#[inline]
fn map_index(kind: MapKind, n: usize, c: usize, h: usize, w: usize, cc: usize, hh: usize, ww: usize) -> usize {
    match kind {
        MapKind::Channel => n * cc + c,
        MapKind::Spatial => (n * hh + h) * ww + w,
    }
}

fn broadcast_apply(big: &Tensor, small: &Tensor, kind: MapKind, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let [n, c, h, w] = [big.shape()[0], big.shape()[1], big.shape()[2], big.shape()[3]];
    let (xb, xs) = (big.data(), small.data());
    let mut out = vec![0.0; big.numel()];
    let mut i = 0;
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    out[i] = f(xb[i], xs[map_index(kind, ni, ci, hi, wi, c, h, w)]);
                    i += 1;
                }
            }
        }
    }
    out
}

/// Reduce a full-shaped gradient onto the map operand's shape.
fn reduce_to_map(g: &[f64], shape: &[usize], kind: MapKind) -> Vec<f64> {
    let [n, c, h, w] = [shape[0], shape[1], shape[2], shape[3]];
    let len = match kind {
        MapKind::Channel => n * c,
        MapKind::Spatial => n * h * w,
    };
    let mut out = vec![0.0; len];
    let mut i = 0;
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    out[map_index(kind, ni, ci, hi, wi, c, h, w)] += g[i];
                    i += 1;
                }
            }
        }
    }
    out
}

pub fn add(tape: Option<&Tape>, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    match classify_pair("add", a, b)? {
        Pairing::Same => {
            let data: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
            let out = Tensor::from_parts(a.shape().to_vec(), data);
            let (ac, bc) = (a.clone(), b.clone());
            maybe_record(tape, &[a, b], &out, move |g| {
                vec![(ac.clone(), g.to_vec()), (bc.clone(), g.to_vec())]
            });
            Ok(out)
        }
        Pairing::Broadcast(small_is_lhs, kind) => {
            let (big, small) = if small_is_lhs { (b, a) } else { (a, b) };
            let out = Tensor::from_parts(big.shape().to_vec(), broadcast_apply(big, small, kind, |x, m| x + m));
            let (bigc, smallc) = (big.clone(), small.clone());
            let shape = big.shape().to_vec();
            maybe_record(tape, &[a, b], &out, move |g| {
                vec![
                    (bigc.clone(), g.to_vec()),
                    (smallc.clone(), reduce_to_map(g, &shape, kind)),
                ]
            });
            Ok(out)
        }
    }
}

pub fn sub(tape: Option<&Tape>, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let out = Tensor::from_parts(a.shape().to_vec(), data);
    let (ac, bc) = (a.clone(), b.clone());
    maybe_record(tape, &[a, b], &out, move |g| {
        vec![
            (ac.clone(), g.to_vec()),
            (bc.clone(), g.iter().map(|v| -v).collect()),
        ]
    });
    Ok(out)
}

pub fn mul(tape: Option<&Tape>, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    match classify_pair("mul", a, b)? {
        Pairing::Same => {
            let data: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
            let out = Tensor::from_parts(a.shape().to_vec(), data);
            let (ac, bc) = (a.clone(), b.clone());
            maybe_record(tape, &[a, b], &out, move |g| {
                let ga: Vec<f64> = g.iter().zip(bc.data()).map(|(gi, y)| gi * y).collect();
                let gb: Vec<f64> = g.iter().zip(ac.data()).map(|(gi, x)| gi * x).collect();
                vec![(ac.clone(), ga), (bc.clone(), gb)]
            });
            Ok(out)
        }
        Pairing::Broadcast(small_is_lhs, kind) => {
            let (big, small) = if small_is_lhs { (b, a) } else { (a, b) };
            let out = Tensor::from_parts(big.shape().to_vec(), broadcast_apply(big, small, kind, |x, m| x * m));
            let (bigc, smallc) = (big.clone(), small.clone());
            let shape = big.shape().to_vec();
            maybe_record(tape, &[a, b], &out, move |g| {
                // d/d big = g ⊙ map (broadcast), d/d map = Σ g ⊙ big over broadcast axes
                let gb = broadcast_apply(
                    &Tensor::from_parts(shape.clone(), g.to_vec()),
                    &smallc,
                    kind,
                    |gi, m| gi * m,
                );
                let prod: Vec<f64> = g.iter().zip(bigc.data()).map(|(gi, x)| gi * x).collect();
                let gm = reduce_to_map(&prod, &shape, kind);
                vec![(bigc.clone(), gb), (smallc.clone(), gm)]
            });
            Ok(out)
        }
    }
}

// ── elementwise unary ops ────────────────────────────────────────────────

fn unary(
    tape: Option<&Tape>,
    x: &Tensor,
    f: impl Fn(f64) -> f64,
    dfdx: impl Fn(f64, f64) -> f64 + 'static, // (x, y) -> dy/dx
) -> Tensor {
    let data: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    let out = Tensor::from_parts(x.shape().to_vec(), data);
    let (xc, yc) = (x.clone(), out.clone());
    maybe_record(tape, &[x], &out, move |g| {
        let gx: Vec<f64> = g
            .iter()
            .zip(xc.data().iter().zip(yc.data()))
            .map(|(gi, (&xi, &yi))| gi * dfdx(xi, yi))
            .collect();
        vec![(xc.clone(), gx)]
    });
    out
}

/// Rectifier; the subgradient at 0 is taken as 0.
pub fn relu(tape: Option<&Tape>, x: &Tensor) -> Result<Tensor> {
    Ok(unary(tape, x, |v| v.max(0.0), |xi, _| if xi > 0.0 { 1.0 } else { 0.0 }))
}

pub fn sigmoid(tape: Option<&Tape>, x: &Tensor) -> Result<Tensor> {
    Ok(unary(tape, x, |v| 1.0 / (1.0 + (-v).exp()), |_, yi| yi * (1.0 - yi)))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh form: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
pub fn gelu(tape: Option<&Tape>, x: &Tensor) -> Result<Tensor> {
    Ok(unary(
        tape,
        x,
        |v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()),
        |xi, _| {
            let u = GELU_C * (xi + GELU_A * xi * xi * xi);
            let t = u.tanh();
            let du = GELU_C * (1.0 + 3.0 * GELU_A * xi * xi);
            0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du
        },
    ))
}

/// Absolute value; the subgradient at 0 is taken as 0.
pub fn abs(tape: Option<&Tape>, x: &Tensor) -> Result<Tensor> {
    Ok(unary(tape, x, f64::abs, |xi, _| {
        if xi > 0.0 {
            1.0
        } else if xi < 0.0 {
            -1.0
        } else {
            0.0
        }
    }))
}

/// Multiply by a compile-time-known constant.
pub fn scale(tape: Option<&Tape>, x: &Tensor, k: f64) -> Result<Tensor> {
    Ok(unary(tape, x, |v| v * k, move |_, _| k))
}

/// Sum of all elements, as a `[1]`-shaped tensor.
pub fn sum_all(tape: Option<&Tape>, x: &Tensor) -> Result<Tensor> {
    let s: f64 = x.data().iter().sum();
    let out = Tensor::from_parts(vec![1], vec![s]);
    let xc = x.clone();
    maybe_record(tape, &[x], &out, move |g| {
        vec![(xc.clone(), vec![g[0]; xc.numel()])]
    });
    Ok(out)
}

/// Mean of all elements, as a `[1]`-shaped tensor.
pub fn mean_all(tape: Option<&Tape>, x: &Tensor) -> Result<Tensor> {
    let n = x.numel() as f64;
    let s = sum_all(tape, x)?;
    scale(tape, &s, 1.0 / n)
}

// ── convolution ──────────────────────────────────────────────────────────

/// 2-D cross-correlation over NCHW with zero padding, stride, and groups.
/// `weight` is `(Cout, Cin/groups, k, k)` with odd `k`; `bias` is `(Cout)`.
pub fn conv2d(
    tape: Option<&Tape>,
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<Tensor> {
    if input.rank() != 4 {
        return Err(Error::dim("input", format!("conv2d expects NCHW input, got {:?}", input.shape())));
    }
    if weight.rank() != 4 {
        return Err(Error::dim("weight", format!("conv2d expects 4-D weight, got {:?}", weight.shape())));
    }
    let [n, cin, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [cout, cin_g, kh, kw] = [weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]];
    if kh != kw || kh % 2 == 0 {
        return Err(Error::dim("kernel", format!("conv2d supports square odd kernels, got {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::dim("stride", "conv2d stride must be at least 1".to_string()));
    }
    if groups == 0 || cin % groups != 0 || cout % groups != 0 {
        return Err(Error::Config(format!(
            "conv2d groups={groups} must divide both input channels {cin} and output channels {cout}"
        )));
    }
    if cin / groups != cin_g {
        return Err(Error::dim(
            "channel",
            format!("conv2d weight expects {cin_g} input channels per group, input supplies {}", cin / groups),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::dim("bias", format!("conv2d bias shape {:?} must be [{cout}]", b.shape())));
        }
    }
    let k = kh;
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::dim(
            "spatial",
            format!("conv2d kernel {k} exceeds padded input {}x{}", h + 2 * padding, w + 2 * padding),
        ));
    }
    let hout = (h + 2 * padding - k) / stride + 1;
    let wout = (w + 2 * padding - k) / stride + 1;
    let (co_g, x, wt) = (cout / groups, input.data(), weight.data());

    let mut out = vec![0.0; n * cout * hout * wout];
    for ni in 0..n {
        for co in 0..cout {
            let ci0 = (co / co_g) * cin_g;
            let b0 = bias.map_or(0.0, |b| b.data()[co]);
            let mut oi = ((ni * cout + co) * hout) * wout;
            for oy in 0..hout {
                let iy0 = (oy * stride) as isize - padding as isize;
                let ky_lo = (-iy0).max(0) as usize;
                let ky_hi = k.min((h as isize - iy0).max(0) as usize);
                for ox in 0..wout {
                    let ix0 = (ox * stride) as isize - padding as isize;
                    let kx_lo = (-ix0).max(0) as usize;
                    let kx_hi = k.min((w as isize - ix0).max(0) as usize);
                    let mut acc = b0;
                    for dci in 0..cin_g {
                        let xc = ((ni * cin + ci0 + dci) * h) as isize;
                        let wcb = ((co * cin_g + dci) * k) * k;
                        for ky in ky_lo..ky_hi {
                            let xrow = ((xc + iy0 + ky as isize) as usize * w) as isize + ix0;
                            let wrow = wcb + ky * k;
                            for kx in kx_lo..kx_hi {
                                acc += wt[wrow + kx] * x[(xrow + kx as isize) as usize];
                            }
                        }
                    }
                    out[oi] = acc;
                    oi += 1;
                }
            }
        }
    }

    let out = Tensor::from_parts(vec![n, cout, hout, wout], out);
    let (ic, wc, bc) = (input.clone(), weight.clone(), bias.cloned());
    let mut tracked: Vec<&Tensor> = vec![input, weight];
    if let Some(b) = bias {
        tracked.push(b);
    }
    maybe_record(tape, &tracked, &out, move |g| {
        let mut grads =
            conv2d_backward(&ic, &wc, g, stride, padding, groups, n, cin, h, w, cout, cin_g, k, hout, wout);
        if let Some(b) = &bc {
            let mut gb = vec![0.0; cout];
            for ni in 0..n {
                for co in 0..cout {
                    let base = ((ni * cout + co) * hout) * wout;
                    let mut s = 0.0;
                    for i in 0..hout * wout {
                        s += g[base + i];
                    }
                    gb[co] += s;
                }
            }
            grads.push((b.clone(), gb));
        }
        grads
    });
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    g: &[f64],
    stride: usize,
    padding: usize,
    groups: usize,
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    cin_g: usize,
    k: usize,
    hout: usize,
    wout: usize,
) -> Vec<(Tensor, Vec<f64>)> {
    let (x, wt) = (input.data(), weight.data());
    let co_g = cout / groups;

    // d/d weight: gather over (n, oy, ox) per weight element.
    let mut gw = vec![0.0; weight.numel()];
    for co in 0..cout {
        let ci0 = (co / co_g) * cin_g;
        for dci in 0..cin_g {
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for ni in 0..n {
                        let gbase = ((ni * cout + co) * hout) * wout;
                        let xc = (ni * cin + ci0 + dci) * h;
                        for oy in 0..hout {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = (xc + iy as usize) * w;
                            let grow = gbase + oy * wout;
                            for ox in 0..wout {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += g[grow + ox] * x[xrow + ix as usize];
                            }
                        }
                    }
                    gw[((co * cin_g + dci) * k + ky) * k + kx] = acc;
                }
            }
        }
    }

    // d/d input: gather over (co in group, ky, kx) per input element.
    let mut gx = vec![0.0; input.numel()];
    for ni in 0..n {
        for ci in 0..cin {
            let gi = ci / cin_g;
            let dci = ci - gi * cin_g;
            for iy in 0..h {
                for ix in 0..w {
                    let mut acc = 0.0;
                    for dco in 0..co_g {
                        let co = gi * co_g + dco;
                        let gbase = ((ni * cout + co) * hout) * wout;
                        let wbase = (co * cin_g + dci) * k * k;
                        for ky in 0..k {
                            let oy_num = iy as isize + padding as isize - ky as isize;
                            if oy_num < 0 || oy_num % stride as isize != 0 {
                                continue;
                            }
                            let oy = (oy_num / stride as isize) as usize;
                            if oy >= hout {
                                continue;
                            }
                            for kx in 0..k {
                                let ox_num = ix as isize + padding as isize - kx as isize;
                                if ox_num < 0 || ox_num % stride as isize != 0 {
                                    continue;
                                }
                                let ox = (ox_num / stride as isize) as usize;
                                if ox >= wout {
                                    continue;
                                }
                                acc += g[gbase + oy * wout + ox] * wt[wbase + ky * k + kx];
                            }
                        }
                    }
                    gx[((ni * cin + ci) * h + iy) * w + ix] = acc;
                }
            }
        }
    }

    vec![(input.clone(), gx), (weight.clone(), gw)]
}

// ── linear / matmul ──────────────────────────────────────────────────────

/// Affine map over the last axis: `out[..., o] = Σ_i in[..., i]·w[o,i] + b[o]`.
pub fn linear(tape: Option<&Tape>, input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    if weight.rank() != 2 {
        return Err(Error::dim("weight", format!("linear weight must be 2-D, got {:?}", weight.shape())));
    }
    let din = *input.shape().last().ok_or_else(|| Error::dim("rank", "linear input must have rank >= 1"))?;
    let (dout, wdin) = (weight.shape()[0], weight.shape()[1]);
    if wdin != din {
        return Err(Error::dim(
            "feature",
            format!("linear input features {din} do not match weight features {wdin}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [dout] {
            return Err(Error::dim("bias", format!("linear bias shape {:?} must be [{dout}]", b.shape())));
        }
    }
    let rows = input.numel() / din;
    let (x, wt) = (input.data(), weight.data());
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        let xrow = &x[r * din..(r + 1) * din];
        for o in 0..dout {
            let wrow = &wt[o * din..(o + 1) * din];
            let mut acc = bias.map_or(0.0, |b| b.data()[o]);
            for i in 0..din {
                acc += xrow[i] * wrow[i];
            }
            out[r * dout + o] = acc;
        }
    }
    let mut oshape = input.shape().to_vec();
    *oshape.last_mut().unwrap() = dout;
    let out = Tensor::from_parts(oshape, out);

    let (ic, wc, bc) = (input.clone(), weight.clone(), bias.cloned());
    let mut tracked: Vec<&Tensor> = vec![input, weight];
    if let Some(b) = bias {
        tracked.push(b);
    }
    maybe_record(tape, &tracked, &out, move |g| {
        let (x, wt) = (ic.data(), wc.data());
        let mut gx = vec![0.0; ic.numel()];
        let mut gw = vec![0.0; wc.numel()];
        for r in 0..rows {
            let grow = &g[r * dout..(r + 1) * dout];
            let xrow = &x[r * din..(r + 1) * din];
            let gxrow = &mut gx[r * din..(r + 1) * din];
            for o in 0..dout {
                let go = grow[o];
                let wrow = &wt[o * din..(o + 1) * din];
                for i in 0..din {
                    gxrow[i] += go * wrow[i];
                }
            }
            // gw accumulated after gx to keep a single pass per row pair
            for o in 0..dout {
                let go = grow[o];
                let gwrow = &mut gw[o * din..(o + 1) * din];
                for i in 0..din {
                    gwrow[i] += go * xrow[i];
                }
            }
        }
        let mut grads = vec![(ic.clone(), gx), (wc.clone(), gw)];
        if let Some(b) = &bc {
            let mut gb = vec![0.0; dout];
            for r in 0..rows {
                for o in 0..dout {
                    gb[o] += g[r * dout + o];
                }
            }
            grads.push((b.clone(), gb));
        }
        grads
    });
    Ok(out)
}

/// Batched matrix product: `[..., M, K] × [..., K, P] → [..., M, P]` with
/// identical leading batch extents.
pub fn matmul_batched(tape: Option<&Tape>, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(Error::dim("rank", "matmul operands must have rank >= 2"));
    }
    if a.rank() != b.rank() || a.shape()[..a.rank() - 2] != b.shape()[..b.rank() - 2] {
        return Err(Error::dim(
            "batch",
            format!("matmul batch extents {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    let (m, ka) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
    let (kb, p) = (b.shape()[b.rank() - 2], b.shape()[b.rank() - 1]);
    if ka != kb {
        return Err(Error::dim("inner", format!("matmul inner extents {ka} and {kb} differ")));
    }
    let batch: usize = a.shape()[..a.rank() - 2].iter().product();
    let (xa, xb) = (a.data(), b.data());
    let mut out = vec![0.0; batch * m * p];
    for bi in 0..batch {
        let (abase, bbase, obase) = (bi * m * ka, bi * ka * p, bi * m * p);
        for mi in 0..m {
            let orow = obase + mi * p;
            for ki in 0..ka {
                let av = xa[abase + mi * ka + ki];
                let brow = bbase + ki * p;
                for pi in 0..p {
                    out[orow + pi] += av * xb[brow + pi];
                }
            }
        }
    }
    let mut oshape = a.shape()[..a.rank() - 2].to_vec();
    oshape.extend_from_slice(&[m, p]);
    let out = Tensor::from_parts(oshape, out);

    let (ac, bc) = (a.clone(), b.clone());
    maybe_record(tape, &[a, b], &out, move |g| {
        let (xa, xb) = (ac.data(), bc.data());
        let mut ga = vec![0.0; ac.numel()];
        let mut gb = vec![0.0; bc.numel()];
        for bi in 0..batch {
            let (abase, bbase, obase) = (bi * m * ka, bi * ka * p, bi * m * p);
            // ga = g · bᵀ
            for mi in 0..m {
                let grow = obase + mi * p;
                for ki in 0..ka {
                    let brow = bbase + ki * p;
                    let mut acc = 0.0;
                    for pi in 0..p {
                        acc += g[grow + pi] * xb[brow + pi];
                    }
                    ga[abase + mi * ka + ki] = acc;
                }
            }
            // gb = aᵀ · g
            for ki in 0..ka {
                let brow = bbase + ki * p;
                for mi in 0..m {
                    let av = xa[abase + mi * ka + ki];
                    let grow = obase + mi * p;
                    for pi in 0..p {
                        gb[brow + pi] += av * g[grow + pi];
                    }
                }
            }
        }
        vec![(ac.clone(), ga), (bc.clone(), gb)]
    });
    Ok(out)
}

// ── normalization ────────────────────────────────────────────────────────

/// Numerically stabilized softmax along `axis` (max subtraction per line).
pub fn softmax(tape: Option<&Tape>, x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::dim("axis", format!("softmax axis {axis} out of range for rank {}", x.rank())));
    }
    let len = x.shape()[axis];
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();
    let xd = x.data();
    let mut out = vec![0.0; x.numel()];
    for o in 0..outer {
        for r in 0..inner {
            let base = o * len * inner + r;
            let mut mx = f64::NEG_INFINITY;
            for i in 0..len {
                mx = mx.max(xd[base + i * inner]);
            }
            let mut sum = 0.0;
            for i in 0..len {
                let e = (xd[base + i * inner] - mx).exp();
                out[base + i * inner] = e;
                sum += e;
            }
            for i in 0..len {
                out[base + i * inner] /= sum;
            }
        }
    }
    let out = Tensor::from_parts(x.shape().to_vec(), out);
    let (xc, yc) = (x.clone(), out.clone());
    maybe_record(tape, &[x], &out, move |g| {
        let y = yc.data();
        let mut gx = vec![0.0; xc.numel()];
        for o in 0..outer {
            for r in 0..inner {
                let base = o * len * inner + r;
                let mut dot = 0.0;
                for i in 0..len {
                    dot += g[base + i * inner] * y[base + i * inner];
                }
                for i in 0..len {
                    let idx = base + i * inner;
                    gx[idx] = y[idx] * (g[idx] - dot);
                }
            }
        }
        vec![(xc.clone(), gx)]
    });
    Ok(out)
}

const LN_EPS: f64 = 1e-5;

/// Layer normalization over the last axis with learnable `gamma`/`beta`.
pub fn layer_norm(tape: Option<&Tape>, x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let d = *x.shape().last().ok_or_else(|| Error::dim("rank", "layer_norm input must have rank >= 1"))?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::dim(
            "feature",
            format!(
                "layer_norm gamma/beta shapes {:?}/{:?} must be [{d}]",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let rows = x.numel() / d;
    let (xd, gd, bd) = (x.data(), gamma.data(), beta.data());
    let mut out = vec![0.0; x.numel()];
    let mut xhat = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &xd[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = istd;
        for i in 0..d {
            let xh = (row[i] - mean) * istd;
            xhat[r * d + i] = xh;
            out[r * d + i] = gd[i] * xh + bd[i];
        }
    }
    let out = Tensor::from_parts(x.shape().to_vec(), out);
    let (xc, gc, bc) = (x.clone(), gamma.clone(), beta.clone());
    maybe_record(tape, &[x, gamma, beta], &out, move |g| {
        let gd = gc.data();
        let mut gx = vec![0.0; xc.numel()];
        let mut ggamma = vec![0.0; d];
        let mut gbeta = vec![0.0; d];
        for r in 0..rows {
            let istd = inv_std[r];
            let xh = &xhat[r * d..(r + 1) * d];
            let grow = &g[r * d..(r + 1) * d];
            let mut sum_gy = 0.0;
            let mut sum_gy_xh = 0.0;
            for i in 0..d {
                let gy = grow[i] * gd[i];
                sum_gy += gy;
                sum_gy_xh += gy * xh[i];
                ggamma[i] += grow[i] * xh[i];
                gbeta[i] += grow[i];
            }
            let inv_d = 1.0 / d as f64;
            for i in 0..d {
                let gy = grow[i] * gd[i];
                gx[r * d + i] = istd * (gy - inv_d * sum_gy - xh[i] * inv_d * sum_gy_xh);
            }
        }
        vec![(xc.clone(), gx), (gc.clone(), ggamma), (bc.clone(), gbeta)]
    });
    Ok(out)
}

// ── shape movement ───────────────────────────────────────────────────────

/// Sub-pixel rearrangement: `(N, C·r², H, W) → (N, C, H·r, W·r)` with
/// `out(n, c, h·r+i, w·r+j) = in(n, c·r² + i·r + j, h, w)`.
pub fn pixel_shuffle(tape: Option<&Tape>, x: &Tensor, r: usize) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::dim("rank", format!("pixel_shuffle expects NCHW, got {:?}", x.shape())));
    }
    if r == 0 {
        return Err(Error::dim("factor", "pixel_shuffle factor must be at least 1"));
    }
    let [n, c_in, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    if c_in % (r * r) != 0 {
        return Err(Error::dim(
            "channel",
            format!("pixel_shuffle needs channels divisible by r² = {}, got {c_in}", r * r),
        ));
    }
    let c = c_in / (r * r);
    let (hr, wr) = (h * r, w * r);
    let xd = x.data();
    let mut out = vec![0.0; x.numel()];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..hr {
                let (hy, i) = (oy / r, oy % r);
                for ox in 0..wr {
                    let (wx, j) = (ox / r, ox % r);
                    let src = ((ni * c_in + ci * r * r + i * r + j) * h + hy) * w + wx;
                    out[((ni * c + ci) * hr + oy) * wr + ox] = xd[src];
                }
            }
        }
    }
    let out = Tensor::from_parts(vec![n, c, hr, wr], out);
    let xc = x.clone();
    maybe_record(tape, &[x], &out, move |g| {
        let mut gx = vec![0.0; xc.numel()];
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..hr {
                    let (hy, i) = (oy / r, oy % r);
                    for ox in 0..wr {
                        let (wx, j) = (ox / r, ox % r);
                        let src = ((ni * c_in + ci * r * r + i * r + j) * h + hy) * w + wx;
                        gx[src] = g[((ni * c + ci) * hr + oy) * wr + ox];
                    }
                }
            }
        }
        vec![(xc.clone(), gx)]
    });
    Ok(out)
}

/// Axis permutation (generalized transpose).
pub fn permute(tape: Option<&Tape>, x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::dim("axis", format!("permutation {perm:?} is not valid for rank {rank}")));
    }
    let in_strides = x.strides();
    let oshape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let numel = x.numel();
    let mut out_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        out_strides[i] = out_strides[i + 1] * oshape[i + 1];
    }
    let xd = x.data();
    let mut out = vec![0.0; numel];
    // Walk output positions in order; map each back to its source index.
    let mut idx = vec![0usize; rank];
    for o in out.iter_mut() {
        let mut src = 0;
        for (a, &i) in idx.iter().enumerate() {
            src += i * in_strides[perm[a]];
        }
        *o = xd[src];
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < oshape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    let out = Tensor::from_parts(oshape.clone(), out);
    let xc = x.clone();
    let perm_owned = perm.to_vec();
    maybe_record(tape, &[x], &out, move |g| {
        // The gradient flows through the inverse permutation.
        let mut gx = vec![0.0; xc.numel()];
        let mut idx = vec![0usize; rank];
        for &gv in g.iter() {
            let mut src = 0;
            for (a, &i) in idx.iter().enumerate() {
                src += i * in_strides[perm_owned[a]];
            }
            gx[src] = gv;
            for a in (0..rank).rev() {
                idx[a] += 1;
                if idx[a] < oshape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        vec![(xc.clone(), gx)]
    });
    Ok(out)
}

/// Same data, new shape (element count must match).
pub fn reshape(tape: Option<&Tape>, x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != x.numel() {
        return Err(Error::dim(
            "numel",
            format!("reshape to {shape:?} ({numel} elements) from {:?} ({})", x.shape(), x.numel()),
        ));
    }
    let out = Tensor::new(shape, x.data().to_vec())?;
    let xc = x.clone();
    maybe_record(tape, &[x], &out, move |g| vec![(xc.clone(), g.to_vec())]);
    Ok(out)
}

/// Concatenate along `axis`; all other extents must agree.
pub fn concat(tape: Option<&Tape>, parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::Usage("concat of zero tensors".to_string()))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::dim("axis", format!("concat axis {axis} out of range for rank {rank}")));
    }
    let mut axis_total = 0;
    for p in parts {
        if p.rank() != rank {
            return Err(Error::dim("rank", "concat operands must share rank"));
        }
        for a in 0..rank {
            if a != axis && p.shape()[a] != first.shape()[a] {
                return Err(Error::dim(
                    "shape",
                    format!("concat operand shapes {:?} and {:?} differ off axis {axis}", first.shape(), p.shape()),
                ));
            }
        }
        axis_total += p.shape()[axis];
    }
    let mut oshape = first.shape().to_vec();
    oshape[axis] = axis_total;
    let outer: usize = oshape[..axis].iter().product();
    let inner: usize = oshape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * axis_total * inner];
    let mut offset = 0;
    for p in parts {
        let plen = p.shape()[axis];
        let pd = p.data();
        for o in 0..outer {
            let src = o * plen * inner;
            let dst = (o * axis_total + offset) * inner;
            out[dst..dst + plen * inner].copy_from_slice(&pd[src..src + plen * inner]);
        }
        offset += plen;
    }
    let out = Tensor::from_parts(oshape, out);
    let owned: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
    let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    maybe_record(tape, parts, &out, move |g| {
        let mut grads = Vec::with_capacity(owned.len());
        let mut offset = 0;
        for (p, &plen) in owned.iter().zip(&sizes) {
            let mut gp = vec![0.0; p.numel()];
            for o in 0..outer {
                let dst = o * plen * inner;
                let src = (o * axis_total + offset) * inner;
                gp[dst..dst + plen * inner].copy_from_slice(&g[src..src + plen * inner]);
            }
            grads.push((p.clone(), gp));
            offset += plen;
        }
        grads
    });
    Ok(out)
}

/// Split along `axis` into pieces of the given sizes (must sum to the extent).
pub fn split(tape: Option<&Tape>, x: &Tensor, sizes: &[usize], axis: usize) -> Result<Vec<Tensor>> {
    if axis >= x.rank() {
        return Err(Error::dim("axis", format!("split axis {axis} out of range for rank {}", x.rank())));
    }
    let total = x.shape()[axis];
    if sizes.iter().sum::<usize>() != total || sizes.iter().any(|&s| s == 0) {
        return Err(Error::dim(
            "axis",
            format!("split sizes {sizes:?} must be positive and sum to extent {total}"),
        ));
    }
    let outer: usize = x.shape()[..axis].iter().product();
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let xd = x.data();
    let mut outs = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &plen in sizes {
        let mut oshape = x.shape().to_vec();
        oshape[axis] = plen;
        let mut data = vec![0.0; outer * plen * inner];
        for o in 0..outer {
            let src = (o * total + offset) * inner;
            let dst = o * plen * inner;
            data[dst..dst + plen * inner].copy_from_slice(&xd[src..src + plen * inner]);
        }
        let piece = Tensor::from_parts(oshape, data);
        let xc = x.clone();
        let off = offset;
        maybe_record(tape, &[x], &piece, move |g| {
            // Scatter the piece gradient back into a zero buffer of x's shape.
            let mut gx = vec![0.0; xc.numel()];
            for o in 0..outer {
                let dst = (o * total + off) * inner;
                let src = o * plen * inner;
                gx[dst..dst + plen * inner].copy_from_slice(&g[src..src + plen * inner]);
            }
            vec![(xc.clone(), gx)]
        });
        outs.push(piece);
        offset += plen;
    }
    Ok(outs)
}

// ── pooling statistics ───────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    /// `(N,C,H,W) → (N,C,1,1)`, mean over all spatial positions.
    GlobalAvg,
    /// `(N,C,H,W) → (N,1,H,W)`, mean over channels.
    ChannelAvg,
    /// `(N,C,H,W) → (N,1,H,W)`, max over channels (ties → lowest index).
    ChannelMax,
}

/// Pooled statistics used by the attention blocks.
pub fn pool_stats(tape: Option<&Tape>, x: &Tensor, kind: PoolKind) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::dim("rank", format!("pool_stats expects NCHW, got {:?}", x.shape())));
    }
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let xd = x.data();
    match kind {
        PoolKind::GlobalAvg => {
            let hw = (h * w) as f64;
            let mut out = vec![0.0; n * c];
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * h * w;
                    out[ni * c + ci] = xd[base..base + h * w].iter().sum::<f64>() / hw;
                }
            }
            let out = Tensor::from_parts(vec![n, c, 1, 1], out);
            let xc = x.clone();
            maybe_record(tape, &[x], &out, move |g| {
                let mut gx = vec![0.0; xc.numel()];
                for ni in 0..n {
                    for ci in 0..c {
                        let gv = g[ni * c + ci] / hw;
                        let base = (ni * c + ci) * h * w;
                        for i in 0..h * w {
                            gx[base + i] = gv;
                        }
                    }
                }
                vec![(xc.clone(), gx)]
            });
            Ok(out)
        }
        PoolKind::ChannelAvg => {
            let cf = c as f64;
            let mut out = vec![0.0; n * h * w];
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * h * w;
                    for i in 0..h * w {
                        out[ni * h * w + i] += xd[base + i];
                    }
                }
            }
            for v in out.iter_mut() {
                *v /= cf;
            }
            let out = Tensor::from_parts(vec![n, 1, h, w], out);
            let xc = x.clone();
            maybe_record(tape, &[x], &out, move |g| {
                let mut gx = vec![0.0; xc.numel()];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * h * w;
                        for i in 0..h * w {
                            gx[base + i] = g[ni * h * w + i] / cf;
                        }
                    }
                }
                vec![(xc.clone(), gx)]
            });
            Ok(out)
        }
        PoolKind::ChannelMax => {
            let mut out = vec![f64::NEG_INFINITY; n * h * w];
            let mut argmax = vec![0usize; n * h * w];
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * h * w;
                    for i in 0..h * w {
                        let v = xd[base + i];
                        // strict > keeps the lowest channel index on ties
                        if v > out[ni * h * w + i] {
                            out[ni * h * w + i] = v;
                            argmax[ni * h * w + i] = ci;
                        }
                    }
                }
            }
            let out = Tensor::from_parts(vec![n, 1, h, w], out);
            let xc = x.clone();
            maybe_record(tape, &[x], &out, move |g| {
                let mut gx = vec![0.0; xc.numel()];
                for ni in 0..n {
                    for i in 0..h * w {
                        let ci = argmax[ni * h * w + i];
                        gx[(ni * c + ci) * h * w + i] = g[ni * h * w + i];
                    }
                }
                vec![(xc.clone(), gx)]
            });
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len(), "length mismatch");
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "element {i}: {x} vs {y} (tol {tol})");
        }
    }

    // ── conv2d ───────────────────────────────────────────────────────────

    /// Independent direct convolution used as the oracle.
    #[allow(clippy::too_many_arguments)]
    fn conv_oracle(
        x: &Tensor,
        w: &Tensor,
        b: Option<&Tensor>,
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Vec<f64> {
        let [n, _cin, h, wi] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [cout, cin_g, k, _] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
        let hout = (h + 2 * pad - k) / stride + 1;
        let wout = (wi + 2 * pad - k) / stride + 1;
        let co_g = cout / groups;
        let mut out = vec![0.0; n * cout * hout * wout];
        for ni in 0..n {
            for co in 0..cout {
                for oy in 0..hout {
                    for ox in 0..wout {
                        let mut acc = b.map_or(0.0, |bb| bb.data()[co]);
                        for dci in 0..cin_g {
                            let ci = (co / co_g) * cin_g + dci;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wi as isize {
                                        continue;
                                    }
                                    acc += x.at(&[ni, ci, iy as usize, ix as usize])
                                        * w.at(&[co, dci, ky, kx]);
                                }
                            }
                        }
                        out[((ni * cout + co) * hout + oy) * wout + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        // small deterministic pseudo-random fill; keeps tests hermetic
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| next()).collect()).unwrap()
    }

    #[test]
    fn conv2d_1x1_scalar_case() {
        let x = Tensor::new(&[1, 1, 1, 1], vec![3.0]).unwrap();
        let w = Tensor::new(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let b = Tensor::new(&[1], vec![0.5]).unwrap();
        let y = conv2d(None, &x, &w, Some(&b), 1, 0, 1).unwrap();
        assert_eq!(y.data(), &[6.5]);
    }

    #[test]
    fn conv2d_identity_kernel_preserves_map() {
        let x = seeded(&[1, 1, 5, 5], 7);
        let mut k = vec![0.0; 9];
        k[4] = 1.0; // center tap
        let w = Tensor::new(&[1, 1, 3, 3], k).unwrap();
        let y = conv2d(None, &x, &w, None, 1, 1, 1).unwrap();
        assert_close(y.data(), x.data(), 0.0);
    }

    #[test]
    fn conv2d_matches_direct_oracle() {
        for (shape, wshape, stride, pad, groups, seed) in [
            (vec![2, 3, 7, 6], vec![4, 3, 3, 3], 1usize, 1usize, 1usize, 1u64),
            (vec![1, 4, 8, 8], vec![6, 2, 3, 3], 1, 1, 2, 2),
            (vec![1, 2, 9, 9], vec![2, 2, 5, 5], 2, 2, 1, 3),
            (vec![1, 1, 6, 7], vec![3, 1, 1, 1], 1, 0, 1, 4),
        ] {
            let x = seeded(&shape, seed);
            let w = seeded(&wshape, seed + 100);
            let b = seeded(&[wshape[0]], seed + 200);
            let y = conv2d(None, &x, &w, Some(&b), stride, pad, groups).unwrap();
            let want = conv_oracle(&x, &w, Some(&b), stride, pad, groups);
            assert_close(y.data(), &want, 1e-10);
        }
    }

    #[test]
    fn conv2d_grouped_equals_independent_slices() {
        let x = seeded(&[1, 4, 6, 6], 11);
        let w = seeded(&[6, 2, 3, 3], 12);
        let grouped = conv2d(None, &x, &w, None, 1, 1, 2).unwrap();

        let xs = split(None, &x, &[2, 2], 1).unwrap();
        let ws = split(None, &w, &[3, 3], 0).unwrap();
        let y0 = conv2d(None, &xs[0], &ws[0], None, 1, 1, 1).unwrap();
        let y1 = conv2d(None, &xs[1], &ws[1], None, 1, 1, 1).unwrap();
        let merged = concat(None, &[&y0, &y1], 1).unwrap();
        assert_close(grouped.data(), merged.data(), 1e-10);
    }

    #[test]
    fn conv2d_rejects_even_kernel_and_bad_groups() {
        let x = Tensor::zeros(&[1, 4, 4, 4]).unwrap();
        let w_even = Tensor::zeros(&[4, 4, 2, 2]).unwrap();
        assert!(conv2d(None, &x, &w_even, None, 1, 0, 1).is_err());
        let w = Tensor::zeros(&[4, 4, 3, 3]).unwrap();
        assert!(matches!(conv2d(None, &x, &w, None, 1, 1, 3), Err(Error::Config(_))));
    }

    #[test]
    fn conv2d_shape_mismatch_names_axis() {
        let x = Tensor::zeros(&[1, 4, 4, 4]).unwrap();
        let w = Tensor::zeros(&[4, 3, 3, 3]).unwrap(); // wants 3 in-channels per group
        let err = conv2d(None, &x, &w, None, 1, 1, 1).unwrap_err();
        match err {
            Error::Dimension { axis, .. } => assert_eq!(axis, "channel"),
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    // ── linear / matmul ──────────────────────────────────────────────────

    #[test]
    fn linear_matches_double_loop_oracle() {
        let x = seeded(&[3, 5], 21);
        let w = seeded(&[4, 5], 22);
        let b = seeded(&[4], 23);
        let y = linear(None, &x, &w, Some(&b)).unwrap();
        for r in 0..3 {
            for o in 0..4 {
                let mut want = b.data()[o];
                for i in 0..5 {
                    want += x.at(&[r, i]) * w.at(&[o, i]);
                }
                assert!((y.at(&[r, o]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let a = seeded(&[2, 2, 3, 4], 31);
        let b = seeded(&[2, 2, 4, 5], 32);
        let y = matmul_batched(None, &a, &b).unwrap();
        assert_eq!(y.shape(), &[2, 2, 3, 5]);
        for b0 in 0..2 {
            for b1 in 0..2 {
                for m in 0..3 {
                    for p in 0..5 {
                        let mut want = 0.0;
                        for k in 0..4 {
                            want += a.at(&[b0, b1, m, k]) * b.at(&[b0, b1, k, p]);
                        }
                        assert!((y.at(&[b0, b1, m, p]) - want).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn matmul_rejects_mismatched_batches_and_inner() {
        let a = Tensor::zeros(&[2, 3, 4]).unwrap();
        let b = Tensor::zeros(&[3, 4, 5]).unwrap();
        assert!(matmul_batched(None, &a, &b).is_err());
        let b2 = Tensor::zeros(&[2, 5, 6]).unwrap();
        assert!(matmul_batched(None, &a, &b2).is_err());
    }

    // ── softmax / layer_norm ─────────────────────────────────────────────

    #[test]
    fn softmax_two_element_closed_form() {
        let x = Tensor::new(&[2], vec![0.0, (2.0f64).ln()]).unwrap();
        let y = softmax(None, &x, 0).unwrap();
        assert_close(y.data(), &[1.0 / 3.0, 2.0 / 3.0], 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_survive_1e4() {
        let x = Tensor::new(&[2, 3], vec![1e4, 0.0, -1e4, 3.0, 3.0, 3.0]).unwrap();
        let y = softmax(None, &x, 1).unwrap();
        for r in 0..2 {
            let s: f64 = (0..3).map(|i| y.at(&[r, i])).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!((0..3).all(|i| y.at(&[r, i]).is_finite()));
        }
        assert_close(&y.data()[3..], &[1.0 / 3.0; 3], 1e-15);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = seeded(&[4, 6], 41);
        let shifted_data: Vec<f64> = x.data().iter().map(|v| v + 123.456).collect();
        let shifted = Tensor::new(&[4, 6], shifted_data).unwrap();
        let a = softmax(None, &x, 1).unwrap();
        let b = softmax(None, &shifted, 1).unwrap();
        assert_close(a.data(), b.data(), 1e-12);
    }

    #[test]
    fn layer_norm_constant_row_yields_beta() {
        let x = Tensor::new(&[2, 4], vec![5.0; 8]).unwrap();
        let gamma = Tensor::new(&[4], vec![2.0; 4]).unwrap();
        let beta = Tensor::new(&[4], vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        let y = layer_norm(None, &x, &gamma, &beta).unwrap();
        assert_close(&y.data()[..4], beta.data(), 1e-12);
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let x = seeded(&[3, 16], 51);
        let gamma = Tensor::full(&[16], 1.0).unwrap();
        let beta = Tensor::zeros(&[16]).unwrap();
        let y = layer_norm(None, &x, &gamma, &beta).unwrap();
        for r in 0..3 {
            let row: Vec<f64> = (0..16).map(|i| y.at(&[r, i])).collect();
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3); // eps slightly shrinks the variance
        }
    }

    // ── shape ops ────────────────────────────────────────────────────────

    #[test]
    fn pixel_shuffle_lays_out_subpixels() {
        let x = Tensor::new(&[1, 4, 1, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = pixel_shuffle(None, &x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn pixel_shuffle_general_index_map() {
        let x = seeded(&[2, 12, 3, 4], 61);
        let r = 2;
        let y = pixel_shuffle(None, &x, r).unwrap();
        assert_eq!(y.shape(), &[2, 3, 6, 8]);
        for n in 0..2 {
            for c in 0..3 {
                for hy in 0..3 {
                    for wx in 0..4 {
                        for i in 0..r {
                            for j in 0..r {
                                assert_eq!(
                                    y.at(&[n, c, hy * r + i, wx * r + j]),
                                    x.at(&[n, c * r * r + i * r + j, hy, wx])
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pixel_shuffle_rejects_indivisible_channels() {
        let x = Tensor::zeros(&[1, 6, 2, 2]).unwrap();
        assert!(pixel_shuffle(None, &x, 2).is_err());
    }

    #[test]
    fn concat_split_roundtrip_on_channels() {
        let a = seeded(&[1, 8, 4, 4], 71);
        let b = seeded(&[1, 8, 4, 4], 72);
        let joined = concat(None, &[&a, &b], 1).unwrap();
        assert_eq!(joined.shape(), &[1, 16, 4, 4]);
        let parts = split(None, &joined, &[8, 8], 1).unwrap();
        assert_close(parts[0].data(), a.data(), 0.0);
        assert_close(parts[1].data(), b.data(), 0.0);
    }

    #[test]
    fn concat_rejects_off_axis_mismatch() {
        let a = Tensor::zeros(&[1, 8, 4, 4]).unwrap();
        let b = Tensor::zeros(&[1, 8, 5, 4]).unwrap();
        assert!(concat(None, &[&a, &b], 1).is_err());
    }

    #[test]
    fn permute_transposes() {
        let x = seeded(&[2, 3, 4], 81);
        let y = permute(None, &x, &[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(y.at(&[c, a, b]), x.at(&[a, b, c]));
                }
            }
        }
    }

    #[test]
    fn reshape_preserves_order() {
        let x = seeded(&[2, 6], 91);
        let y = reshape(None, &x, &[3, 4]).unwrap();
        assert_close(y.data(), x.data(), 0.0);
        assert!(reshape(None, &x, &[5, 3]).is_err());
    }

    // ── pooling ──────────────────────────────────────────────────────────

    #[test]
    fn pool_global_avg() {
        let x = Tensor::new(&[1, 2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]).unwrap();
        let y = pool_stats(None, &x, PoolKind::GlobalAvg).unwrap();
        assert_eq!(y.shape(), &[1, 2, 1, 1]);
        assert_close(y.data(), &[2.5, 25.0], 1e-12);
    }

    #[test]
    fn pool_channel_avg_and_max() {
        let x = Tensor::new(&[1, 3, 1, 2], vec![1.0, -1.0, 5.0, 3.0, 0.0, -2.0]).unwrap();
        let avg = pool_stats(None, &x, PoolKind::ChannelAvg).unwrap();
        assert_eq!(avg.shape(), &[1, 1, 1, 2]);
        assert_close(avg.data(), &[2.0, 0.0], 1e-12);
        let max = pool_stats(None, &x, PoolKind::ChannelMax).unwrap();
        assert_close(max.data(), &[5.0, 3.0], 1e-12);
    }

    #[test]
    fn pool_channel_max_ties_route_grad_to_lowest_channel() {
        let tape = Tape::new();
        let x = Tensor::param(&[1, 2, 1, 1], vec![4.0, 4.0]).unwrap();
        let y = pool_stats(Some(&tape), &x, PoolKind::ChannelMax).unwrap();
        let s = sum_all(Some(&tape), &y).unwrap();
        tape.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn pool_on_1x1_spatial_is_identity_for_gap() {
        let x = seeded(&[2, 5, 1, 1], 101);
        let y = pool_stats(None, &x, PoolKind::GlobalAvg).unwrap();
        assert_close(y.data(), x.data(), 0.0);
    }

    // ── elementwise ──────────────────────────────────────────────────────

    #[test]
    fn broadcast_add_and_mul_channel_map() {
        let x = seeded(&[2, 3, 2, 2], 111);
        let m = seeded(&[2, 3, 1, 1], 112);
        let y = mul(None, &x, &m).unwrap();
        let z = add(None, &m, &x).unwrap(); // map may sit on either side
        for n in 0..2 {
            for c in 0..3 {
                for h in 0..2 {
                    for w in 0..2 {
                        let mv = m.at(&[n, c, 0, 0]);
                        assert!((y.at(&[n, c, h, w]) - x.at(&[n, c, h, w]) * mv).abs() < 1e-15);
                        assert!((z.at(&[n, c, h, w]) - (x.at(&[n, c, h, w]) + mv)).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn broadcast_mul_spatial_map() {
        let x = seeded(&[1, 4, 3, 3], 121);
        let m = seeded(&[1, 1, 3, 3], 122);
        let y = mul(None, &x, &m).unwrap();
        for c in 0..4 {
            for h in 0..3 {
                for w in 0..3 {
                    assert!((y.at(&[0, c, h, w]) - x.at(&[0, c, h, w]) * m.at(&[0, 0, h, w])).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn broadcast_rejects_arbitrary_shapes() {
        let x = Tensor::zeros(&[1, 4, 3, 3]).unwrap();
        let m = Tensor::zeros(&[1, 2, 1, 1]).unwrap();
        assert!(mul(None, &x, &m).is_err());
    }

    #[test]
    fn relu_is_idempotent_and_sigmoid_is_bounded() {
        let x = seeded(&[64], 131);
        let r1 = relu(None, &x).unwrap();
        let r2 = relu(None, &r1).unwrap();
        assert_close(r1.data(), r2.data(), 0.0);
        let s = sigmoid(None, &x).unwrap();
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn gelu_fixed_points() {
        let x = Tensor::new(&[3], vec![0.0, 10.0, -10.0]).unwrap();
        let y = gelu(None, &x).unwrap();
        assert!(y.data()[0].abs() < 1e-15);
        assert!((y.data()[1] - 10.0).abs() < 1e-9);
        assert!(y.data()[2].abs() < 1e-9);
    }

    #[test]
    fn abs_scale_sub_mean() {
        let x = Tensor::new(&[4], vec![-1.0, 2.0, -3.0, 4.0]).unwrap();
        let y = abs(None, &x).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let z = scale(None, &x, -2.0).unwrap();
        assert_eq!(z.data(), &[2.0, -4.0, 6.0, -8.0]);
        let d = sub(None, &x, &y).unwrap();
        assert_eq!(d.data(), &[-2.0, 0.0, -6.0, 0.0]);
        let m = mean_all(None, &y).unwrap();
        assert_eq!(m.data(), &[2.5]);
    }
}
