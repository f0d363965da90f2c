//! Batch evaluation: score an upscaler over a directory of ground-truth
//! images and print the per-image TSV report.
//!
//!     cargo run --example evaluate

use lbnet::data::{save_png, synth, DatasetIndex};
use lbnet::eval::{evaluate, BicubicBaseline};

fn main() -> lbnet::Result<()> {
    // stage a small ground-truth set on disk, then scan it back like the
    // CLI does, so the whole directory path is exercised
    let dir = std::env::temp_dir().join("lbnet-evaluate");
    std::fs::create_dir_all(&dir).map_err(|e| lbnet::Error::io(&dir, e))?;
    for (i, img) in synth::corpus(3, 40, 56, 5).iter().enumerate() {
        save_png(&dir.join(format!("synth{i}.png")), img)?;
    }

    let index = DatasetIndex::scan(&dir)?;
    let mut items = Vec::new();
    for path in index.paths() {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        items.push((name, lbnet::data::load_png(path)?));
    }

    let report = evaluate(&BicubicBaseline { scale: 2 }, &items)?;
    print!("{}", report.tsv());
    Ok(())
}
