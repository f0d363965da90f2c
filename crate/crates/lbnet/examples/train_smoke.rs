//! Short end-to-end training run on synthetic textures, with a checkpoint
//! save/reload and a PSNR comparison against the bicubic baseline.
//!
//!     cargo run --example train_smoke            # 120 steps
//!     cargo run --example train_smoke -- 500     # longer run

use lbnet::data::synth;
use lbnet::eval::{evaluate, BicubicBaseline, NetUpscaler, Upscaler};
use lbnet::model::{FusionMode, LBNet, ModelConfig};
use lbnet::train::{load_checkpoint, save_checkpoint, train, Adam, TrainOptions};

fn main() -> lbnet::Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(120);

    let config = ModelConfig {
        scale: 2,
        channels: 16,
        n_lffm: 1,
        recursions: 1,
        tm_count: 1,
        heads: 4,
        mlp_ratio: 2,
        ca_reduction: 4,
        sa_kernel: 7,
        fusion_mode: FusionMode::Ca,
        qk_reduction: 2,
        tm_dim: 80,
        rt_enabled: true,
        share_down_weights: true,
    };
    let mut model = LBNet::new(config, 0)?;
    println!("model: {} parameters", model.param_count());

    let images = synth::corpus(4, 48, 48, 11);
    // short run, tiny batch: anneal from a much hotter rate than the
    // full-length recipe would use
    let options = TrainOptions {
        lr_max: 1e-3,
        lr_min: 1e-5,
        total_steps: steps,
        batch_size: 2,
        patch: 16,
        seed: 0,
    };

    let mut opt = Adam::new();
    let started = std::time::Instant::now();
    let logs = train(&mut model, &mut opt, &images, &options, 0..steps, |log| {
        if log.step % 20 == 0 || log.step + 1 == steps {
            println!("step {:>5}  lr {:.3e}  loss {:.6}", log.step, log.lr, log.loss);
        }
    })?;
    let secs = started.elapsed().as_secs_f64();
    println!(
        "{steps} steps in {secs:.1}s ({:.0} ms/step)",
        1000.0 * secs / steps as f64
    );

    let first: f64 = logs.iter().take(10).map(|l| l.loss).sum::<f64>() / 10.0;
    let last: f64 = logs.iter().rev().take(10).map(|l| l.loss).sum::<f64>() / 10.0;
    println!("mean loss, first 10 steps: {first:.6}, last 10: {last:.6}");

    // Round-trip through the checkpoint format and make sure the reloaded
    // network still produces the same output (up to f32 storage).
    let path = std::env::temp_dir().join("lbnet-train-smoke.lbnc");
    save_checkpoint(&path, &model, steps as u64, Some(&opt))?;
    let (reloaded, at_step, _) = load_checkpoint(&path)?.into_model()?;
    println!("checkpoint reloaded at step {at_step}: {}", path.display());

    let items: Vec<(String, lbnet::data::Image)> = images
        .iter()
        .enumerate()
        .map(|(i, im)| (format!("synth{i}.png"), im.clone()))
        .collect();
    let baseline = BicubicBaseline { scale: 2 };
    let net = NetUpscaler { model: &reloaded };
    for (label, up) in [("bicubic", &baseline as &dyn Upscaler), ("lbnet", &net)] {
        let report = evaluate(up, &items)?;
        println!(
            "{label:8} psnr {:6.2} dB  ssim {:.4}",
            report.mean_psnr().unwrap_or(f64::INFINITY),
            report.mean_ssim().unwrap_or(1.0),
        );
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
