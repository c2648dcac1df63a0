//! Helpers shared by the examples: a small model trained in seconds, or a
//! real checkpoint when one is passed in.

#![allow(dead_code)]

use std::path::Path;

use nca_resilience::checkpoint::load_checkpoint;
use nca_resilience::data::{generate_synthetic, split, Dataset};
use nca_resilience::grid::{BinaryMask, FloatMap};
use nca_resilience::nca::{NcaHyper, NcaParams};
use nca_resilience::training::{train, TrainConfig};
use nca_resilience::uncertainty::UncertaintyConfig;

/// Image side used by the quick examples.
pub const QUICK_SIZE: usize = 32;

/// A reduced configuration that trains on one core in well under a minute.
pub fn quick_config() -> TrainConfig {
    TrainConfig {
        hyper: NcaHyper {
            num_channels: 16,
            hidden_size: 32,
            fire_rate: 0.5,
        },
        epochs: 20,
        learning_rate: 3e-3,
        t_min: 16,
        t_max: 32,
        seed: 7,
        ..TrainConfig::default()
    }
}

/// Rollout settings matching [`quick_config`].
pub fn quick_uq() -> UncertaintyConfig {
    UncertaintyConfig {
        t_min: 16,
        t_max: 32,
        rollout_steps: 32,
        ..UncertaintyConfig::default()
    }
}

pub fn quick_dataset(n: usize, seed: u64) -> Dataset {
    let ds = generate_synthetic(n, (QUICK_SIZE, QUICK_SIZE), seed).expect("synthetic data");
    split(ds, (0.7, 0.15, 0.15), seed).expect("split")
}

/// Loads the checkpoint named by the first CLI argument, or trains the
/// quick model and returns it.
pub fn model_from_args() -> (NcaParams, UncertaintyConfig) {
    if let Some(path) = std::env::args().nth(1) {
        let params = load_checkpoint(Path::new(&path)).expect("readable checkpoint");
        eprintln!("loaded {path}");
        let uq = if params.hyper.num_channels == 64 { UncertaintyConfig::default() } else { quick_uq() };
        return (params, uq);
    }
    eprintln!("no checkpoint given; training a small model (pass a .ckpt path to skip)");
    let ds = quick_dataset(60, 7);
    let outcome = train(&ds, &quick_config(), |e| {
        eprintln!("  epoch {} loss {:.4} val dice {:.4}", e.epoch, e.mean_loss, e.val_dice)
    })
    .expect("training");
    (outcome.best, quick_uq())
}

/// One character per pixel: `#` foreground, `.` background.
pub fn ascii_mask(mask: &BinaryMask) -> String {
    let mut out = String::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            out.push(if *mask.get(y, x) { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

/// Ten-level shading of a map with values in `[0, max]`.
pub fn ascii_map(map: &FloatMap, max: f32) -> String {
    const RAMP: &[u8] = b" .:-=+*#%@";
    let mut out = String::new();
    for y in 0..map.height() {
        for x in 0..map.width() {
            let v = (map.get(y, x) / max).clamp(0.0, 1.0);
            out.push(RAMP[((v * 9.0).round()) as usize] as char);
        }
        out.push('\n');
    }
    out
}
