//! PNG load/save at the `[0,1]` f64 boundary.

use super::Image;
use crate::error::{Error, Result};
use std::path::Path;

/// Load a PNG as planar RGB. Grayscale and palette images are expanded;
/// an alpha channel, if present, is dropped.
pub fn load_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let rgb = dynimg.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut out = Image::new(h, w);
    for (y, row) in rgb.rows().enumerate() {
        for (x, px) in row.enumerate() {
            for c in 0..3 {
                out.set(c, y, x, px.0[c] as f64 / 255.0);
            }
        }
    }
    Ok(out)
}

/// Save as 8-bit RGB PNG; samples are clamped and rounded.
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                (img.get(0, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.get(1, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.get(2, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}
