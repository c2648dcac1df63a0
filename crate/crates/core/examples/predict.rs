//! Segment one image and watch the mask form over the rollout.
//!
//! ```text
//! cargo run --release --example predict -- [CHECKPOINT]
//! ```

#[path = "common/mod.rs"]
mod common;

use nca_resilience::data::generate_sample;
use nca_resilience::metrics::{dice, iou};
use nca_resilience::nca::{init_state, rollout, seeded_rng, TrajectoryPolicy};

fn main() -> anyhow::Result<()> {
    let (params, uq) = common::model_from_args();
    let size = if params.hyper.num_channels == 64 { 64 } else { common::QUICK_SIZE };
    let sample = generate_sample(99, 0, (size, size))?;

    let steps = uq.rollout_steps;
    let checkpoints: Vec<usize> = (0..=steps).step_by(steps / 4).collect();
    let state = init_state(&sample.image, params.hyper.num_channels)?;
    let (_, traj) = rollout(
        state,
        &params,
        steps,
        &mut seeded_rng(1, 0),
        &TrajectoryPolicy::AtSteps(checkpoints),
    )?;
    let traj = traj.expect("recorded");
    for (t, prob) in traj.steps.iter().zip(&traj.probs) {
        let mask = prob.threshold(0.5);
        println!(
            "t = {t:>3}: foreground {:>4} px, dice {:.4}, iou {:.4}",
            mask.count(),
            dice(&mask, &sample.mask)?,
            iou(&mask, &sample.mask)?
        );
    }
    let last = traj.probs.last().unwrap().threshold(0.5);
    if size <= 32 {
        println!("\nprediction:\n{}", common::ascii_mask(&last));
        println!("ground truth:\n{}", common::ascii_mask(&sample.mask));
    }
    Ok(())
}
