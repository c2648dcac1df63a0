//! Perturb-and-recover on clean and corrupted images: a sweep over the
//! noise scale, plus the degenerate limit with a frozen fire-mask stream.
//!
//! ```text
//! cargo run --release --example resilience -- [CHECKPOINT]
//! ```

#[path = "common/mod.rs"]
mod common;

use nca_resilience::data::{corrupt, generate_sample, CorruptionKind};
use nca_resilience::metrics::dice;
use nca_resilience::nca::{predict, seeded_rng};
use nca_resilience::uncertainty::{perturb_and_recover, resilience, FrozenFireStream};

fn main() -> anyhow::Result<()> {
    let (params, uq) = common::model_from_args();
    let size = if params.hyper.num_channels == 64 { 64 } else { common::QUICK_SIZE };
    let clean = generate_sample(5, 0, (size, size))?;
    let noisy = corrupt(&clean, CorruptionKind::GaussianNoise, 4, 1)?;
    let occluded = corrupt(&clean, CorruptionKind::Occlusion, 4, 1)?;

    println!("{:<10} {:>8} {:>10}", "image", "dice", "u_res");
    for (name, s) in [("clean", &clean), ("noise", &noisy), ("occlusion", &occluded)] {
        let report = resilience(&params, &s.image, 42, &uq)?;
        let (_, pred) = predict(&params, &s.image, uq.rollout_steps, 42)?;
        println!("{name:<10} {:>8.4} {:>10.4}", dice(&pred.mask, &s.mask)?, report.u);
    }

    let (state, _) = predict(&params, &noisy.image, uq.rollout_steps, 42)?;
    println!("\nsigma sweep on the noisy image ({} relaxation steps)", uq.relax_steps);
    for sigma in [0.0f32, 0.005, 0.02, 0.05, 0.1, 0.2, 0.5] {
        let (_, u_live) = perturb_and_recover(
            &state,
            &params,
            sigma,
            uq.relax_steps,
            uq.threshold,
            &mut seeded_rng(42, 0),
            &mut seeded_rng(42, 2),
        )?;
        let (_, u_frozen) = perturb_and_recover(
            &state,
            &params,
            sigma,
            uq.relax_steps,
            uq.threshold,
            &mut FrozenFireStream,
            &mut seeded_rng(42, 2),
        )?;
        println!("  sigma {sigma:<6} u {u_live:.4}   frozen fire stream u {u_frozen:.4}");
    }
    Ok(())
}
