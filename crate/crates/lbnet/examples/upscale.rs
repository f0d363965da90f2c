//! Upscale a PNG end to end: synthesize one, degrade it, then restore it
//! with the bicubic baseline and with an untrained network. Outputs land in
//! a temp directory so the pipeline can be inspected image by image.
//!
//!     cargo run --example upscale

use lbnet::data::{downscale, load_png, modcrop, save_png, synth, upscale};
use lbnet::eval::{psnr_y, ssim_y};
use lbnet::model::{LBNet, ModelConfig};

fn main() -> lbnet::Result<()> {
    let scale = 2usize;
    let dir = std::env::temp_dir().join("lbnet-upscale");
    std::fs::create_dir_all(&dir).map_err(|e| lbnet::Error::io(&dir, e))?;

    let hr = modcrop(&synth::textured(64, 80, 3), scale)?;
    let lr = downscale(&hr, scale)?;
    save_png(&dir.join("hr.png"), &hr)?;
    save_png(&dir.join("lr.png"), &lr)?;

    // round-trip through the PNG codec, as the CLI would
    let lr = load_png(&dir.join("lr.png"))?;

    let cubic = upscale(&lr, scale)?;
    save_png(&dir.join("bicubic.png"), &cubic)?;

    let model = LBNet::new(ModelConfig::lbnet_t(scale), 0)?;
    let mut sr = {
        let y = model.forward(None, &lr.to_tensor())?;
        lbnet::data::Image::from_tensor(&y, 0)?
    };
    sr.clamp01();
    save_png(&dir.join("network.png"), &sr)?;

    for (label, img) in [("bicubic", &cubic), ("network", &sr)] {
        println!(
            "{label:8} psnr {:6.2} dB  ssim {:.4}",
            psnr_y(img, &hr, scale)?,
            ssim_y(img, &hr, scale)?,
        );
    }
    println!("images written to {}", dir.display());
    println!("(the network is untrained here; see train_smoke for a trained one)");
    Ok(())
}
