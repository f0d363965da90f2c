//! Luma-channel quality metrics and the evaluation driver.

pub mod psnr;
pub mod ssim;

pub use psnr::{psnr_from_mse, psnr_y};
pub use ssim::{ssim_plane, ssim_y};

use crate::data::{downscale, modcrop, upscale, Image};
use crate::error::{Error, Result};
use crate::model::LBNet;

/// Anything that maps a low-resolution image to a `scale()`-times larger one.
pub trait Upscaler {
    fn scale(&self) -> usize;
    fn upscale(&self, lr: &Image) -> Result<Image>;
}

/// Plain bicubic enlargement, the reference every model run is compared to.
pub struct BicubicBaseline {
    pub scale: usize,
}

impl Upscaler for BicubicBaseline {
    fn scale(&self) -> usize {
        self.scale
    }

    fn upscale(&self, lr: &Image) -> Result<Image> {
        upscale(lr, self.scale)
    }
}

/// Runs the network on whole images, clamping the output into `[0,1]`.
pub struct NetUpscaler<'a> {
    pub model: &'a LBNet,
}

impl Upscaler for NetUpscaler<'_> {
    fn scale(&self) -> usize {
        self.model.config().scale
    }

    fn upscale(&self, lr: &Image) -> Result<Image> {
        let y = self.model.forward(None, &lr.to_tensor())?;
        let mut img = Image::from_tensor(&y, 0)?;
        img.clamp01();
        Ok(img)
    }
}

#[derive(Clone, Debug)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Restored luma matched the reference exactly inside the border; the
    /// infinite PSNR is flagged and kept out of the mean.
    pub identical: bool,
}

#[derive(Clone, Debug, Default)]
pub struct MetricReport {
    pub scores: Vec<ImageScore>,
}

impl MetricReport {
    /// Mean PSNR over images with a finite score.
    pub fn mean_psnr(&self) -> Option<f64> {
        let finite: Vec<f64> =
            self.scores.iter().filter(|s| !s.identical).map(|s| s.psnr).collect();
        if finite.is_empty() {
            None
        } else {
            Some(finite.iter().sum::<f64>() / finite.len() as f64)
        }
    }

    /// Mean SSIM over every image (identical pairs score 1).
    pub fn mean_ssim(&self) -> Option<f64> {
        if self.scores.is_empty() {
            None
        } else {
            Some(self.scores.iter().map(|s| s.ssim).sum::<f64>() / self.scores.len() as f64)
        }
    }

    /// Images whose PSNR was excluded as infinite.
    pub fn excluded(&self) -> usize {
        self.scores.iter().filter(|s| s.identical).count()
    }

    /// Tab-separated rows plus a mean row; infinite PSNR renders as `inf`.
    pub fn tsv(&self) -> String {
        let mut out = String::from("image\tpsnr\tssim\n");
        for s in &self.scores {
            let p = if s.identical { "inf".to_string() } else { format!("{:.4}", s.psnr) };
            out.push_str(&format!("{}\t{}\t{:.5}\n", s.name, p, s.ssim));
        }
        let mp = self.mean_psnr().map_or("-".to_string(), |v| format!("{v:.4}"));
        let ms = self.mean_ssim().map_or("-".to_string(), |v| format!("{v:.5}"));
        out.push_str(&format!("mean\t{mp}\t{ms}\n"));
        if self.excluded() > 0 {
            out.push_str(&format!("# {} identical image(s) excluded from mean psnr\n", self.excluded()));
        }
        out
    }
}

/// Score `up` against ground-truth images: each is cropped to a scale
/// multiple, reduced bicubically, restored, and compared on luma inside a
/// `scale`-pixel border.
pub fn evaluate(up: &dyn Upscaler, items: &[(String, Image)]) -> Result<MetricReport> {
    let scale = up.scale();
    let mut scores = Vec::with_capacity(items.len());
    for (name, hr) in items {
        let hr_c = modcrop(hr, scale)?;
        let lr = downscale(&hr_c, scale)?;
        let sr = up.upscale(&lr)?;
        if sr.height() != hr_c.height() || sr.width() != hr_c.width() {
            return Err(Error::dim(
                "spatial",
                format!(
                    "{name}: upscaler produced {}x{}, expected {}x{}",
                    sr.height(),
                    sr.width(),
                    hr_c.height(),
                    hr_c.width()
                ),
            ));
        }
        let psnr = psnr_y(&sr, &hr_c, scale)?;
        let ssim = ssim_y(&sr, &hr_c, scale)?;
        scores.push(ImageScore { name: name.clone(), psnr, ssim, identical: psnr.is_infinite() });
    }
    Ok(MetricReport { scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth;
    use crate::model::{FusionMode, ModelConfig};

    fn items(count: usize, side: usize, seed: u64) -> Vec<(String, Image)> {
        synth::corpus(count, side, side, seed)
            .into_iter()
            .enumerate()
            .map(|(i, img)| (format!("img{i}.png"), img))
            .collect()
    }

    #[test]
    fn bicubic_baseline_scores_in_plausible_ranges() {
        let report = evaluate(&BicubicBaseline { scale: 2 }, &items(3, 32, 1)).unwrap();
        assert_eq!(report.scores.len(), 3);
        assert_eq!(report.excluded(), 0);
        for s in &report.scores {
            assert!(s.psnr > 10.0 && s.psnr < 60.0, "{}: psnr {}", s.name, s.psnr);
            assert!(s.ssim > 0.0 && s.ssim < 1.0, "{}: ssim {}", s.name, s.ssim);
        }
        let mean = report.mean_psnr().unwrap();
        let by_hand =
            report.scores.iter().map(|s| s.psnr).sum::<f64>() / report.scores.len() as f64;
        assert!((mean - by_hand).abs() < 1e-12);
    }

    /// Returns the reference image regardless of input: a perfect restorer.
    struct Cheat {
        hr: Image,
        scale: usize,
    }

    impl Upscaler for Cheat {
        fn scale(&self) -> usize {
            self.scale
        }

        fn upscale(&self, _lr: &Image) -> Result<Image> {
            Ok(self.hr.clone())
        }
    }

    #[test]
    fn perfect_restoration_is_flagged_and_excluded() {
        let hr = synth::textured(24, 24, 2);
        let up = Cheat { hr: hr.clone(), scale: 2 };
        let report = evaluate(&up, &[("exact.png".to_string(), hr)]).unwrap();
        assert_eq!(report.excluded(), 1);
        assert!(report.scores[0].identical);
        assert!(report.scores[0].psnr.is_infinite());
        assert_eq!(report.scores[0].ssim, 1.0);
        assert!(report.mean_psnr().is_none());
        assert_eq!(report.mean_ssim(), Some(1.0));
        let tsv = report.tsv();
        assert!(tsv.contains("exact.png\tinf\t1.00000"), "{tsv}");
        assert!(tsv.contains("excluded"), "{tsv}");
    }

    #[test]
    fn mismatched_upscaler_output_is_rejected() {
        let hr = synth::textured(24, 24, 3);
        let up = Cheat { hr: hr.clone(), scale: 3 };
        let report = evaluate(&up, &[("ok.png".to_string(), hr.clone())]);
        assert!(report.is_ok());
        let bad = Cheat { hr: synth::textured(20, 20, 3), scale: 2 };
        assert!(evaluate(&bad, &[("bad.png".to_string(), hr)]).is_err());
    }

    #[test]
    fn network_upscaler_runs_end_to_end() {
        let cfg = ModelConfig {
            scale: 2,
            channels: 8,
            n_lffm: 1,
            recursions: 0,
            tm_count: 1,
            heads: 2,
            mlp_ratio: 2,
            ca_reduction: 4,
            sa_kernel: 3,
            fusion_mode: FusionMode::Ca,
            qk_reduction: 2,
            tm_dim: 8,
            rt_enabled: true,
            share_down_weights: true,
        };
        let model = LBNet::new(cfg, 5).unwrap();
        let up = NetUpscaler { model: &model };
        let report = evaluate(&up, &items(1, 26, 4)).unwrap();
        let s = &report.scores[0];
        assert!(s.psnr.is_finite() && s.psnr > 5.0, "psnr {}", s.psnr);
        assert!(s.ssim > -1.0 && s.ssim <= 1.0);
        let tsv = report.tsv();
        assert!(tsv.starts_with("image\tpsnr\tssim\n"));
        assert!(tsv.contains("mean\t"));
    }
}
