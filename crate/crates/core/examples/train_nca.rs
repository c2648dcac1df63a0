//! Train an NCA segmenter on synthetic data and save the checkpoints.
//!
//! Defaults to the small configuration so it finishes quickly; `--full`
//! switches to the full recipe (64 channels, 64x64 images, T in 32..=64),
//! with early stopping once validation Dice reaches 0.95.
//!
//! ```text
//! cargo run --release --example train_nca -- [OUT_DIR] [--full]
//! ```

#[path = "common/mod.rs"]
mod common;

use std::path::PathBuf;

use nca_resilience::data::{generate_synthetic, split, Sample, SplitName};
use nca_resilience::training::{mean_dice, train_to_dir, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--full");
    let out = PathBuf::from(
        args.iter()
            .find(|a| !a.starts_with("--"))
            .cloned()
            .unwrap_or_else(|| "nca_model".into()),
    );

    let (ds, config) = if full {
        let ds = split(generate_synthetic(300, (64, 64), 0)?, (0.7, 0.15, 0.15), 0)?;
        let config = TrainConfig {
            target_val_dice: Some(0.95),
            ..TrainConfig::default()
        };
        (ds, config)
    } else {
        (common::quick_dataset(60, 7), common::quick_config())
    };
    println!(
        "training on {} images ({} channels, hidden {}, T in {}..={})",
        ds.splits.train.len(),
        config.hyper.num_channels,
        config.hyper.hidden_size,
        config.t_min,
        config.t_max
    );
    let (outcome, artifacts) = train_to_dir(&ds, &config, &out, |e| {
        println!("epoch {:>2}  loss {:.4}  val dice {:.4}", e.epoch, e.mean_loss, e.val_dice)
    })?;
    let test: Vec<&Sample> = ds.split_samples(SplitName::Test).collect();
    let test_dice = mean_dice(&outcome.best, &test, config.t_max, config.seed)?;
    println!(
        "best epoch {} (val {:.4}), test dice {test_dice:.4}; wrote {}",
        outcome.best_epoch,
        outcome.best_val_dice,
        artifacts.best_checkpoint.display()
    );
    Ok(())
}
