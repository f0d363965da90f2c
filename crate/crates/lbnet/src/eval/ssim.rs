//! Structural similarity on the luma channel: 11x11 Gaussian window,
//! sigma 1.5, valid windows only.

use super::psnr::cropped_luma;
use crate::data::Image;
use crate::error::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 6.5025; // (0.01 * 255)^2
const C2: f64 = 58.5225; // (0.03 * 255)^2

/// Normalized 1-D Gaussian taps; the separable outer product reproduces the
/// usual 2-D window.
fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let mid = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        *t = (-((i as f64 - mid).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
        sum += *t;
    }
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Valid-mode separable blur: rows first, then columns.
fn valid_blur(plane: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let wv = w - (WINDOW - 1);
    let mut rows = vec![0.0; h * wv];
    for y in 0..h {
        for x in 0..wv {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * plane[y * w + x + k];
            }
            rows[y * wv + x] = acc;
        }
    }
    let hv = h - (WINDOW - 1);
    let mut out = vec![0.0; hv * wv];
    for y in 0..hv {
        for x in 0..wv {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows[(y + k) * wv + x];
            }
            out[y * wv + x] = acc;
        }
    }
    out
}

/// Mean SSIM over all valid windows of two `h` x `w` sample planes.
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if h < WINDOW || w < WINDOW {
        return Err(Error::dim(
            "spatial",
            format!("{h}x{w} is smaller than the {WINDOW}x{WINDOW} window"),
        ));
    }
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::dim("spatial", "plane length does not match h*w".to_string()));
    }
    let taps = gaussian_taps();
    let sq_a: Vec<f64> = a.iter().map(|v| v * v).collect();
    let sq_b: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = valid_blur(a, h, w, &taps);
    let mu_b = valid_blur(b, h, w, &taps);
    let e_aa = valid_blur(&sq_a, h, w, &taps);
    let e_bb = valid_blur(&sq_b, h, w, &taps);
    let e_ab = valid_blur(&ab, h, w, &taps);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cab = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + C1) * (2.0 * cab + C2);
        let den = (ma * ma + mb * mb + C1) * (va + vb + C2);
        sum += num / den;
    }
    Ok(sum / mu_a.len() as f64)
}

/// Luma SSIM with `border` pixels shaved from every side.
pub fn ssim_y(sr: &Image, hr: &Image, border: usize) -> Result<f64> {
    let (ya, yb) = cropped_luma(sr, hr, border)?;
    let h = sr.height() - 2 * border;
    let w = sr.width() - 2 * border;
    ssim_plane(&ya, &yb, h, w)
}
