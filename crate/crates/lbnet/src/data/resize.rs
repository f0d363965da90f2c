//! Bicubic resampling with antialias widening on downscale.
//!
//! The kernel is the Catmull-Rom-style cubic with a = −0.5. Output sample
//! `xo` maps to source coordinate `u = (xo + 0.5)/ratio − 0.5`; when
//! shrinking, the kernel is widened by the inverse ratio so source samples
//! are averaged rather than skipped. Taps are clamped at the edges and the
//! weights renormalized to sum to one, so constants are reproduced exactly.

use super::Image;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Cubic convolution kernel, a = −0.5.
fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        (1.5 * x - 2.5) * x * x + 1.0
    } else if x < 2.0 {
        ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
    } else {
        0.0
    }
}

/// Tap positions and normalized weights for one output coordinate.
fn taps(xo: usize, src: usize, dst: usize) -> (Vec<usize>, Vec<f64>) {
    let ratio = dst as f64 / src as f64;
    let kscale = (1.0 / ratio).max(1.0); // kernel widening for antialias
    let u = (xo as f64 + 0.5) / ratio - 0.5;
    let radius = 2.0 * kscale;
    let lo = (u - radius).ceil() as isize;
    let hi = (u + radius).floor() as isize;
    let mut idx = Vec::with_capacity((hi - lo + 1).max(0) as usize);
    let mut wts = Vec::with_capacity(idx.capacity());
    let mut sum = 0.0;
    for i in lo..=hi {
        let w = cubic((u - i as f64) / kscale);
        if w == 0.0 {
            continue;
        }
        idx.push(i.clamp(0, src as isize - 1) as usize);
        wts.push(w);
        sum += w;
    }
    if idx.is_empty() {
        // degenerate only for pathological ratios; fall back to nearest
        idx.push(u.round().clamp(0.0, src as f64 - 1.0) as usize);
        wts.push(1.0);
        sum = 1.0;
    }
    for w in wts.iter_mut() {
        *w /= sum;
    }
    (idx, wts)
}

fn tap_table(src: usize, dst: usize) -> Vec<(Vec<usize>, Vec<f64>)> {
    (0..dst).map(|xo| taps(xo, src, dst)).collect()
}

/// Resize one plane separably: rows first, then columns.
pub fn resize_plane(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let htaps = tap_table(sw, dw);
    let mut mid = vec![0.0; sh * dw];
    for y in 0..sh {
        let row = &src[y * sw..(y + 1) * sw];
        for (xo, (idx, wts)) in htaps.iter().enumerate() {
            let mut acc = 0.0;
            for (i, w) in idx.iter().zip(wts) {
                acc += row[*i] * w;
            }
            mid[y * dw + xo] = acc;
        }
    }
    let vtaps = tap_table(sh, dh);
    let mut out = vec![0.0; dh * dw];
    for (yo, (idx, wts)) in vtaps.iter().enumerate() {
        for xo in 0..dw {
            let mut acc = 0.0;
            for (i, w) in idx.iter().zip(wts) {
                acc += mid[i * dw + xo] * w;
            }
            out[yo * dw + xo] = acc;
        }
    }
    out
}

pub fn resize_image(img: &Image, dh: usize, dw: usize) -> Result<Image> {
    if dh == 0 || dw == 0 {
        return Err(Error::dim("spatial", "resize target must be nonzero"));
    }
    let mut data = Vec::with_capacity(3 * dh * dw);
    for c in 0..3 {
        data.extend(resize_plane(img.plane(c), img.height(), img.width(), dh, dw));
    }
    Image::from_planes(dh, dw, data)
}

/// Upscale by an integer factor.
pub fn upscale(img: &Image, scale: usize) -> Result<Image> {
    if scale == 0 {
        return Err(Error::dim("factor", "scale must be at least 1"));
    }
    resize_image(img, img.height() * scale, img.width() * scale)
}

/// Downscale by an integer factor; extents must divide evenly (see `modcrop`).
pub fn downscale(img: &Image, scale: usize) -> Result<Image> {
    if scale == 0 {
        return Err(Error::dim("factor", "scale must be at least 1"));
    }
    if img.height() % scale != 0 || img.width() % scale != 0 {
        return Err(Error::dim(
            "spatial",
            format!("image {}x{} is not divisible by scale {scale}; modcrop first", img.height(), img.width()),
        ));
    }
    resize_image(img, img.height() / scale, img.width() / scale)
}

/// Trim bottom/right rows so both extents divide by `scale`.
pub fn modcrop(img: &Image, scale: usize) -> Result<Image> {
    let h = img.height() - img.height() % scale;
    let w = img.width() - img.width() % scale;
    if h == 0 || w == 0 {
        return Err(Error::dim("spatial", format!("image {}x{} too small for scale {scale}", img.height(), img.width())));
    }
    img.crop(0, 0, h, w)
}

/// Adjoint of `resize_plane`: scatter an output-sized gradient back through
/// the same tap tables (columns first, then rows — the reverse order).
fn resize_plane_vjp(gout: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let vtaps = tap_table(sh, dh);
    let mut gmid = vec![0.0; sh * dw];
    for (yo, (idx, wts)) in vtaps.iter().enumerate() {
        for xo in 0..dw {
            let g = gout[yo * dw + xo];
            for (i, w) in idx.iter().zip(wts) {
                gmid[i * dw + xo] += g * w;
            }
        }
    }
    let htaps = tap_table(sw, dw);
    let mut gsrc = vec![0.0; sh * sw];
    for y in 0..sh {
        for (xo, (idx, wts)) in htaps.iter().enumerate() {
            let g = gmid[y * dw + xo];
            for (i, w) in idx.iter().zip(wts) {
                gsrc[y * sw + i] += g * w;
            }
        }
    }
    gsrc
}

/// Bicubic-upscale every plane of an `(N, C, H, W)` tensor. The resampling
/// is linear in the input, so the recorded backward pass is the transposed
/// stencil; this keeps the parameter-free reconstruction skip differentiable
/// end to end.
pub fn upscale_tensor(tape: Option<&Tape>, t: &Tensor, scale: usize) -> Result<Tensor> {
    if t.rank() != 4 {
        return Err(Error::dim("rank", format!("expected NCHW tensor, got {:?}", t.shape())));
    }
    let [n, c, h, w] = [t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]];
    let (dh, dw) = (h * scale, w * scale);
    let mut data = Vec::with_capacity(n * c * dh * dw);
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            data.extend(resize_plane(&t.data()[base..base + h * w], h, w, dh, dw));
        }
    }
    let out = Tensor::new(&[n, c, dh, dw], data)?;
    if let Some(tp) = tape {
        if tp.tracks(t) {
            let src = t.clone();
            let planes = n * c;
            tp.record(
                &out,
                Box::new(move |gout| {
                    let mut g = Vec::with_capacity(planes * h * w);
                    for p in 0..planes {
                        g.extend(resize_plane_vjp(&gout[p * dh * dw..(p + 1) * dh * dw], h, w, dh, dw));
                    }
                    vec![(src.clone(), g)]
                }),
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_image(h: usize, w: usize, seed: u64) -> Image {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let data: Vec<f64> = (0..3 * h * w).map(|_| next()).collect();
        Image::from_planes(h, w, data).unwrap()
    }

    /// Direct 2-D resampling with explicit product weights — no separable
    /// pass, no shared tap tables — used as the oracle.
    fn resize_plane_direct(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
        let mut out = vec![0.0; dh * dw];
        for yo in 0..dh {
            let (yidx, ywts) = taps(yo, sh, dh);
            for xo in 0..dw {
                let (xidx, xwts) = taps(xo, sw, dw);
                let mut acc = 0.0;
                for (yi, wy) in yidx.iter().zip(&ywts) {
                    for (xi, wx) in xidx.iter().zip(&xwts) {
                        acc += src[yi * sw + xi] * wy * wx;
                    }
                }
                out[yo * dw + xo] = acc;
            }
        }
        out
    }

    #[test]
    fn kernel_fixed_points() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert_eq!(cubic(2.5), 0.0);
        assert!((cubic(0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic(1.5) - (-0.0625)).abs() < 1e-15);
    }

    #[test]
    fn identity_resize_is_exact() {
        let img = seeded_image(7, 9, 1);
        let out = resize_image(&img, 7, 9).unwrap();
        for c in 0..3 {
            for (a, b) in img.plane(c).iter().zip(out.plane(c)) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn constant_image_stays_constant_both_directions() {
        let mut img = Image::new(8, 12);
        for c in 0..3 {
            img.plane_mut(c).fill(0.37);
        }
        for out in [upscale(&img, 3).unwrap(), downscale(&img, 4).unwrap()] {
            for c in 0..3 {
                for v in out.plane(c) {
                    assert!((v - 0.37).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_ramp_reproduced_in_interior() {
        // the cubic kernel reconstructs affine signals exactly away from edges
        let mut img = Image::new(4, 16);
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..16 {
                    img.set(c, y, x, x as f64);
                }
            }
        }
        let up = upscale(&img, 2).unwrap();
        for x in 8..24 {
            // interior column of the 32-wide output; u = (x+0.5)/2 - 0.5
            let want = (x as f64 + 0.5) / 2.0 - 0.5;
            assert!((up.get(0, 4, x) - want).abs() < 1e-12, "col {x}: {} vs {want}", up.get(0, 4, x));
        }
    }

    #[test]
    fn separable_matches_direct_2d() {
        for (sh, sw, dh, dw, seed) in [
            (12usize, 10usize, 24usize, 20usize, 2u64), // up x2
            (12, 12, 4, 4, 3),                          // down x3 (antialias path)
            (9, 15, 12, 10, 4),                         // mixed
        ] {
            let img = seeded_image(sh, sw, seed);
            let sep = resize_plane(img.plane(1), sh, sw, dh, dw);
            let direct = resize_plane_direct(img.plane(1), sh, sw, dh, dw);
            for (a, b) in sep.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn downscale_averages_with_antialias() {
        // alternating 0/1 columns average to ~0.5 under the widened kernel
        let mut img = Image::new(8, 16);
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..16 {
                    img.set(c, y, x, (x % 2) as f64);
                }
            }
        }
        let down = downscale(&img, 4).unwrap();
        for v in down.plane(0) {
            assert!((v - 0.5).abs() < 0.15, "antialiased sample {v} strays from the mean");
        }
    }

    #[test]
    fn modcrop_trims_remainders() {
        let img = seeded_image(10, 13, 5);
        let cropped = modcrop(&img, 4).unwrap();
        assert_eq!((cropped.height(), cropped.width()), (8, 12));
        assert_eq!(cropped.get(2, 7, 11), img.get(2, 7, 11));
        assert!(downscale(&cropped, 4).is_ok());
        assert!(downscale(&img, 4).is_err());
    }

    #[test]
    fn tensor_upscale_matches_image_upscale() {
        let img = seeded_image(6, 5, 6);
        let up_img = upscale(&img, 2).unwrap();
        let up_t = upscale_tensor(None, &img.to_tensor(), 2).unwrap();
        let back = Image::from_tensor(&up_t, 0).unwrap();
        assert_eq!(back, up_img);
    }

    #[test]
    fn tensor_upscale_gradients_check_out() {
        use crate::tensor::{check_gradients_with_step, ops};
        let x = seeded_image(4, 5, 7).to_tensor().to_param();
        let worst = check_gradients_with_step(&[x], 1e-6, |tape, xs| {
            let up = upscale_tensor(tape, &xs[0], 3)?;
            ops::mean_all(tape, &up)
        })
        .unwrap();
        assert!(worst < 1e-8, "worst relative error {worst}");
    }

    #[test]
    fn tensor_upscale_vjp_is_the_exact_transpose() {
        // <A x, y> == <x, A' y> for random x, y
        let mut state = 0xC0FFEEu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let (sh, sw, s) = (5usize, 4usize, 2usize);
        let (dh, dw) = (sh * s, sw * s);
        let x: Vec<f64> = (0..sh * sw).map(|_| next()).collect();
        let y: Vec<f64> = (0..dh * dw).map(|_| next()).collect();
        let ax = resize_plane(&x, sh, sw, dh, dw);
        let aty = resize_plane_vjp(&y, sh, sw, dh, dw);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
}
