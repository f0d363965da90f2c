//! Peak signal-to-noise ratio on the luma channel.

use crate::data::color::y_plane;
use crate::data::Image;
use crate::error::{Error, Result};

pub const PEAK: f64 = 255.0;

/// Mean squared error between two equally sized sample slices.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// `10 log10(255^2 / mse)`; identical inputs yield infinity, which callers
/// must flag and keep out of averages.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Luma PSNR with `border` pixels shaved from every side, the usual
/// convention for scale-`s` comparisons (`border = s`).
pub fn psnr_y(sr: &Image, hr: &Image, border: usize) -> Result<f64> {
    let (ya, yb) = cropped_luma(sr, hr, border)?;
    Ok(psnr_from_mse(mse(&ya, &yb)))
}

/// Shared helper: shape check, border crop, luma conversion.
pub fn cropped_luma(sr: &Image, hr: &Image, border: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if sr.height() != hr.height() || sr.width() != hr.width() {
        return Err(Error::dim(
            "spatial",
            format!(
                "comparing {}x{} against {}x{}",
                sr.height(),
                sr.width(),
                hr.height(),
                hr.width()
            ),
        ));
    }
    if sr.height() <= 2 * border || sr.width() <= 2 * border {
        return Err(Error::dim(
            "spatial",
            format!("{}x{} leaves nothing inside border {border}", sr.height(), sr.width()),
        ));
    }
    let h = sr.height() - 2 * border;
    let w = sr.width() - 2 * border;
    let a = sr.crop(border, border, h, w)?;
    let b = hr.crop(border, border, h, w)?;
    Ok((y_plane(&a), y_plane(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_mse_is_the_peak_ratio() {
        let v = psnr_from_mse(1.0);
        assert!((v - 48.130803608679104).abs() < 1e-12, "{v}");
        assert_eq!(v, 20.0 * 255f64.log10());
    }

    #[test]
    fn identical_planes_go_to_infinity() {
        assert!(psnr_from_mse(0.0).is_infinite());
        let img = Image::new(8, 8);
        assert!(psnr_y(&img, &img, 2).unwrap().is_infinite());
    }

    #[test]
    fn uniform_unit_luma_offset_through_images() {
        // gray ramp offset by 1/219 in linear space is a luma offset of 1
        let mut a = Image::new(10, 10);
        let mut b = Image::new(10, 10);
        for y in 0..10 {
            for x in 0..10 {
                for c in 0..3 {
                    a.set(c, y, x, 0.4);
                    b.set(c, y, x, 0.4 + 1.0 / 219.0);
                }
            }
        }
        let v = psnr_y(&a, &b, 2).unwrap();
        assert!((v - 48.130803608679104).abs() < 1e-9, "{v}");
    }

    #[test]
    fn border_pixels_are_ignored() {
        let mut a = Image::new(8, 8);
        let b = Image::new(8, 8);
        // corrupt only the outermost ring
        for i in 0..8 {
            for c in 0..3 {
                a.set(c, 0, i, 1.0);
                a.set(c, 7, i, 1.0);
                a.set(c, i, 0, 1.0);
                a.set(c, i, 7, 1.0);
            }
        }
        assert!(psnr_y(&a, &b, 1).unwrap().is_infinite());
        assert!(psnr_y(&a, &b, 0).unwrap().is_finite());
    }

    #[test]
    fn rejects_mismatched_or_too_small_inputs() {
        let a = Image::new(8, 8);
        let b = Image::new(8, 9);
        assert!(psnr_y(&a, &b, 1).is_err());
        let c = Image::new(4, 4);
        assert!(psnr_y(&c, &c, 2).is_err());
    }
}
