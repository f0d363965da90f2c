//! Parameter and mult-add accounting for the two presets at every scale.
//!
//!     cargo run --example profile

use lbnet::model::{format_count, profile, LBNet, ModelConfig};

fn main() -> lbnet::Result<()> {
    for scale in [2usize, 3, 4] {
        for (name, cfg) in [
            ("lbnet", ModelConfig::lbnet(scale)),
            ("lbnet-t", ModelConfig::lbnet_t(scale)),
        ] {
            let model = LBNet::new(cfg, 0)?;
            let report = profile(&model, 180, 320);
            println!(
                "{name:8} x{scale}  params {:>7}  conv {:>6}  attention {:>6}",
                format_count(report.total_params as u64),
                format_count(report.conv_mult_adds),
                format_count(report.attn_mult_adds),
            );
        }
    }

    println!("\nlargest tensors, lbnet x4:");
    let model = LBNet::new(ModelConfig::lbnet(4), 0)?;
    let report = profile(&model, 180, 320);
    let mut rows = report.rows.clone();
    rows.sort_by(|a, b| b.elements.cmp(&a.elements));
    for r in rows.iter().take(8) {
        println!(
            "  {:40} {:>8} elements  {:>8} mult-adds",
            r.name,
            r.elements,
            format_count(r.mult_adds)
        );
    }
    println!("\nfull table: cargo run --bin lbnet -- profile --config <cfg> --tsv");
    Ok(())
}
