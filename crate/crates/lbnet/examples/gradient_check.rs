//! Whole-model gradient verification: compare the backward pass of a small
//! network against central finite differences on a random sample of
//! coordinates from the input and from every parameter tensor.
//!
//!     cargo run --example gradient_check

use lbnet::model::{FusionMode, LBNet, ModelConfig, ParamSet};
use lbnet::tensor::{check_gradients_sampled, Tensor};
use lbnet::train::l1_loss;

fn filled(shape: &[usize], seed: u64) -> Tensor {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn main() -> lbnet::Result<()> {
    let config = ModelConfig {
        scale: 2,
        channels: 8,
        n_lffm: 1,
        recursions: 1,
        tm_count: 1,
        heads: 2,
        mlp_ratio: 1,
        ca_reduction: 2,
        sa_kernel: 3,
        fusion_mode: FusionMode::Ca,
        qk_reduction: 2,
        tm_dim: 8,
        rt_enabled: true,
        share_down_weights: true,
    };
    let model = LBNet::new(config.clone(), 7)?;

    // Zero-initialized tensors are a poor probe point: a bias at exactly
    // zero can park a relu preactivation on its kink, and a zeroed
    // reconstruction weight blocks gradient flow to everything upstream.
    // Nudge every all-zero leaf to small random values first.
    let names: Vec<String> = model.params().names().map(String::from).collect();
    let mut leaves = vec![filled(&[1, 3, 6, 6], 1)];
    for (i, name) in names.iter().enumerate() {
        let t = model.params().get(name)?;
        if t.data().iter().all(|v| *v == 0.0) {
            let noise = filled(t.shape(), 900 + i as u64);
            let data: Vec<f64> = noise.data().iter().map(|v| (v - 0.5) * 0.1).collect();
            leaves.push(Tensor::new(t.shape(), data)?);
        } else {
            leaves.push(t);
        }
    }
    let target = filled(&[1, 3, 12, 12], 2);

    println!(
        "checking {} coordinates per tensor across {} tensors...",
        4,
        leaves.len()
    );
    let worst = check_gradients_sampled(&leaves, 1e-6, 4, 99, move |tape, xs| {
        let net = LBNet::from_parts(config.clone(), ParamSet::from_pairs(&names, &xs[1..])?)?;
        let sr = net.forward(tape, &xs[0])?;
        l1_loss(tape, &sr, &target)
    })?;

    println!("worst relative error: {worst:.3e}");
    if worst < 1e-4 {
        println!("backward pass agrees with finite differences");
    } else {
        println!("MISMATCH: analytic and numeric gradients disagree");
        std::process::exit(1);
    }
    Ok(())
}
