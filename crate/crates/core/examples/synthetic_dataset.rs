//! Generate the seeded synthetic shapes dataset, split it and write PNG
//! pairs plus `manifest.csv`.
//!
//! ```text
//! cargo run --release --example synthetic_dataset -- [OUT_DIR] [COUNT]
//! ```

use std::path::PathBuf;

use nca_resilience::data::{generate_synthetic, load_with_manifest, save_dataset_png, split, SplitName};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_data".into()));
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);

    let ds = split(generate_synthetic(count, (64, 64), 0)?, (0.7, 0.15, 0.15), 0)?;
    for name in [SplitName::Train, SplitName::Val, SplitName::Test] {
        let fg: Vec<f64> = ds
            .split_samples(name)
            .map(|s| s.mask.count() as f64 / (64.0 * 64.0))
            .collect();
        println!(
            "{:<5} {:>4} images, mean foreground fraction {:.3}",
            name.as_str(),
            fg.len(),
            fg.iter().sum::<f64>() / fg.len() as f64
        );
    }

    let manifest = save_dataset_png(&ds, &out)?;
    let reloaded = load_with_manifest(&manifest, None)?;
    assert_eq!(reloaded.splits, ds.splits);
    println!("wrote {} and reloaded {} samples from it", manifest.display(), reloaded.len());
    Ok(())
}
