//! Score one image with all six methods from a single shared rollout and
//! print the per-pixel maps around the predicted boundary.
//!
//! ```text
//! cargo run --release --example uncertainty_baselines -- [CHECKPOINT]
//! ```

#[path = "common/mod.rs"]
mod common;

use nca_resilience::data::{corrupt, generate_sample, CorruptionKind};
use nca_resilience::metrics::dice;
use nca_resilience::uncertainty::{boundary_band, score_all};

fn main() -> anyhow::Result<()> {
    let (params, uq) = common::model_from_args();
    let size = if params.hyper.num_channels == 64 { 64 } else { common::QUICK_SIZE };
    let sample = corrupt(&generate_sample(8, 0, (size, size))?, CorruptionKind::Blur, 4, 3)?;

    let scores = score_all(&params, &sample.image, 17, &uq)?;
    println!("dice of the shared prediction: {:.4}", dice(&scores.prediction.mask, &sample.mask)?);
    println!("{:<11} {:>8} {:>10} {:>10}  fallback", "method", "u", "band mean", "band p95");
    for r in &scores.reports {
        match &r.band {
            Some(b) => println!(
                "{:<11} {:>8.4} {:>10.4} {:>10.4}  {}",
                r.method.as_str(),
                r.u,
                b.mean,
                b.p95,
                b.fallback
            ),
            None => println!("{:<11} {:>8.4} {:>10} {:>10}", r.method.as_str(), r.u, "-", "-"),
        }
    }

    if size <= 32 {
        println!("\nboundary band (r = {}):", uq.band_radius);
        println!("{}", common::ascii_mask(&boundary_band(&scores.prediction.mask, uq.band_radius)));
        for r in scores.reports.iter().filter(|r| r.map.is_some()) {
            let map = r.map.as_ref().unwrap();
            let max = map.data().iter().cloned().fold(1e-6f32, f32::max);
            println!("{} map (max {max:.3}):\n{}", r.method.as_str(), common::ascii_map(map, max));
        }
    }
    Ok(())
}
