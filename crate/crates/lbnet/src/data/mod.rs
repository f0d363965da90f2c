//! Image I/O, resampling, color conversion, and patch sampling.
//!
//! Pixel data lives in planar RGB `f64` buffers normalized to `[0, 1]`;
//! conversion to integer sample values happens only at the PNG boundary.

pub mod color;
pub mod patch;
pub mod png;
pub mod resize;
pub mod synth;

pub use patch::{augment, augment_inverse, sample_patch_pair, DatasetIndex};
pub use png::{load_png, save_png};
pub use resize::{downscale, modcrop, resize_image, upscale};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Planar RGB image: three `h·w` planes stored back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image { height, width, data: vec![0.0; 3 * height * width] }
    }

    pub fn from_planes(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim("spatial", "image extents must be nonzero"));
        }
        if data.len() != 3 * height * width {
            return Err(Error::dim(
                "numel",
                format!("planar buffer holds {} values, {height}x{width} RGB needs {}", data.len(), 3 * height * width),
            ));
        }
        Ok(Image { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Crop the `ph × pw` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, ph: usize, pw: usize) -> Result<Image> {
        if y0 + ph > self.height || x0 + pw > self.width {
            return Err(Error::dim(
                "spatial",
                format!(
                    "crop {ph}x{pw}+{y0}+{x0} exceeds image {}x{}",
                    self.height, self.width
                ),
            ));
        }
        let mut out = Image::new(ph, pw);
        for c in 0..3 {
            for y in 0..ph {
                for x in 0..pw {
                    out.set(c, y, x, self.get(c, y0 + y, x0 + x));
                }
            }
        }
        Ok(out)
    }

    /// View as an `(1, 3, h, w)` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, 3, self.height, self.width], self.data.clone())
            .expect("image buffer always matches its own extents")
    }

    /// Stack same-sized images into an `(N, 3, h, w)` tensor.
    pub fn batch_to_tensor(images: &[Image]) -> Result<Tensor> {
        let first = images.first().ok_or_else(|| Error::Usage("empty image batch".to_string()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(images.len() * 3 * h * w);
        for img in images {
            if img.height != h || img.width != w {
                return Err(Error::dim(
                    "spatial",
                    format!("batch mixes {h}x{w} and {}x{} images", img.height, img.width),
                ));
            }
            data.extend_from_slice(&img.data);
        }
        Tensor::new(&[images.len(), 3, h, w], data)
    }

    /// Extract batch element `n` of an `(N, 3, h, w)` tensor.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Image> {
        if t.rank() != 4 || t.shape()[1] != 3 {
            return Err(Error::dim("shape", format!("expected (N,3,H,W) tensor, got {:?}", t.shape())));
        }
        if n >= t.shape()[0] {
            return Err(Error::dim("batch", format!("batch index {n} out of range {}", t.shape()[0])));
        }
        let (h, w) = (t.shape()[2], t.shape()[3]);
        let stride = 3 * h * w;
        Image::from_planes(h, w, t.data()[n * stride..(n + 1) * stride].to_vec())
    }

    /// Clamp all samples into `[0, 1]` in place.
    pub fn clamp01(&mut self) {
        for v in self.data.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
}
