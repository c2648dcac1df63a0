mod common;

use std::sync::Arc;

use nca_resilience::autodiff::{Graph, Tensor};
use nca_resilience::grid::RgbImage;
use nca_resilience::nca::{
    fire_mask, init_state, predict, readout, rollout, seeded_rng, step, step_recorded, NcaHyper,
    NcaParams, ParamVars, TrajectoryPolicy,
};
use proptest::prelude::*;
use rand::Rng;

use common::random_tensor;

fn small_hyper(fire_rate: f32) -> NcaHyper {
    NcaHyper {
        num_channels: 12,
        hidden_size: 16,
        fire_rate,
    }
}

/// Parameters with a nonzero output layer so steps actually move the state.
fn active_params(hyper: NcaHyper, seed: u64) -> NcaParams {
    let mut rng = seeded_rng(seed, 3);
    let mut p = NcaParams::init(hyper, &mut rng).unwrap();
    p.w2 = random_tensor(&mut rng, p.w2.shape().to_vec(), -0.1, 0.1);
    p
}

fn image(seed: u64, size: usize) -> RgbImage {
    let mut rng = seeded_rng(seed, 9);
    RgbImage::from_fn(size, size, |_, _| [rng.random(), rng.random(), rng.random()])
}

#[test]
fn init_state_layout() {
    let img = image(1, 8);
    let s = init_state(&img, 12).unwrap();
    assert_eq!(s.tensor.shape(), &[8, 8, 12]);
    assert_eq!(s.image(), img);
    for cell in s.tensor.data().chunks(12) {
        assert!(cell[3..].iter().all(|&v| v == 0.0));
    }
    assert!(init_state(&RgbImage::filled(2, 5, [0.0; 3]), 12).is_err());
    assert!(init_state(&img, 4).is_err());
}

#[test]
fn init_scheme() {
    let hyper = NcaHyper::default();
    let p = NcaParams::init(hyper, &mut seeded_rng(0, 10)).unwrap();
    assert_eq!(p.w1.shape(), &[128, 192]);
    assert_eq!(p.b1.shape(), &[128]);
    assert_eq!(p.w2.shape(), &[61, 128]);
    let bound = (1.0f32 / 192.0).sqrt();
    assert!(p.w1.data().iter().all(|v| v.abs() <= bound));
    assert!(p.b1.data().iter().all(|&v| v == 0.0));
    assert!(p.w2.data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_init_reads_as_half_and_empty_mask() {
    let p = NcaParams::init(small_hyper(0.5), &mut seeded_rng(2, 10)).unwrap();
    let (_, pred) = predict(&p, &image(2, 10), 16, 9).unwrap();
    assert!(pred.prob.data().iter().all(|&v| v == 0.5));
    assert!(pred.mask.is_empty_mask());
}

#[test]
fn fire_mask_rate_and_extremes() {
    let mut rng = seeded_rng(4, 0);
    assert!(fire_mask(&mut rng, 100, 0.0).is_empty());
    assert_eq!(fire_mask(&mut rng, 100, 1.0).len(), 100);
    let total: usize = (0..200).map(|_| fire_mask(&mut rng, 1000, 0.5).len()).sum();
    let rate = total as f64 / 200_000.0;
    assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
}

#[test]
fn rollout_composes() {
    let p = active_params(small_hyper(0.5), 5);
    let s0 = init_state(&image(5, 9), 12).unwrap();
    let mut a = seeded_rng(7, 0);
    let (full, _) = rollout(s0.clone(), &p, 10, &mut a, &TrajectoryPolicy::None).unwrap();
    let mut b = seeded_rng(7, 0);
    let (half, _) = rollout(s0, &p, 4, &mut b, &TrajectoryPolicy::None).unwrap();
    let (rest, _) = rollout(half, &p, 6, &mut b, &TrajectoryPolicy::None).unwrap();
    assert_eq!(full, rest);
    assert_eq!(full.step, 10);
}

#[test]
fn trajectory_policies() {
    let p = active_params(small_hyper(0.5), 6);
    let s0 = init_state(&image(6, 8), 12).unwrap();
    let run = |policy| {
        rollout(s0.clone(), &p, 10, &mut seeded_rng(1, 0), &policy)
            .unwrap()
            .1
    };
    assert!(run(TrajectoryPolicy::None).is_none());
    let all = run(TrajectoryPolicy::All).unwrap();
    assert_eq!(all.steps, (0..=10).collect::<Vec<_>>());
    let last = run(TrajectoryPolicy::LastWindow(3)).unwrap();
    assert_eq!(last.steps, vec![7, 8, 9, 10]);
    assert_eq!(last.probs[3], all.probs[10]);
    let at = run(TrajectoryPolicy::AtSteps(vec![0, 5])).unwrap();
    assert_eq!(at.steps, vec![0, 5]);
    assert_eq!(at.at(5), Some(&all.probs[5]));
}

#[test]
fn readout_matches_last_two_channels() {
    let mut s = init_state(&image(3, 4), 12).unwrap();
    for (i, cell) in s.tensor.data_mut().chunks_mut(12).enumerate() {
        cell[10] = 0.0;
        cell[11] = if i % 2 == 0 { 2.0 } else { -2.0 };
    }
    let pred = readout(&s);
    for (i, &p) in pred.prob.data().iter().enumerate() {
        let want = if i % 2 == 0 { 0.8808 } else { 0.1192 };
        assert!((p - want).abs() < 1e-4);
        assert_eq!(pred.mask.data()[i], i % 2 == 0);
    }
}

#[test]
fn recorded_step_matches_inference_step() {
    let p = active_params(small_hyper(0.5), 8);
    let mut state = init_state(&image(8, 7), 12).unwrap();
    let mut rng_a = seeded_rng(3, 0);
    let mut rng_b = seeded_rng(3, 0);
    let mut g = Graph::new();
    let vars = ParamVars::record(&mut g, &p);
    let mut v = g.input(state.tensor.clone());
    for _ in 0..6 {
        state = step(state, &p, &mut rng_a).unwrap();
        let fired: Arc<[usize]> = fire_mask(&mut rng_b, 49, 0.5).into();
        v = step_recorded(&mut g, v, &vars, fired).unwrap();
    }
    let rec = g.value(v).data();
    for (a, b) in state.tensor.data().iter().zip(rec) {
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn channel_mismatch_is_an_error() {
    let p = active_params(small_hyper(0.5), 1);
    let s = init_state(&image(1, 5), 10).unwrap();
    assert!(step(s, &p, &mut seeded_rng(0, 0)).is_err());
}

#[test]
fn invalid_hyper_rejected() {
    let mut rng = seeded_rng(0, 0);
    for h in [
        NcaHyper { num_channels: 5, ..small_hyper(0.5) },
        NcaHyper { hidden_size: 0, ..small_hyper(0.5) },
        NcaHyper { fire_rate: 1.5, ..small_hyper(0.5) },
    ] {
        assert!(NcaParams::init(h, &mut rng).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_fire_rate_is_a_fixed_point(seed in any::<u64>(), steps in 1usize..8) {
        let p = active_params(small_hyper(0.0), seed);
        let mut s0 = init_state(&image(seed, 6), 12).unwrap();
        let mut rng = seeded_rng(seed, 1);
        for v in s0.tensor.data_mut().iter_mut().skip(3).step_by(4) {
            *v = rng.random_range(-1.0..1.0);
        }
        let (s, _) = rollout(s0.clone(), &p, steps, &mut seeded_rng(seed, 0), &TrajectoryPolicy::None).unwrap();
        prop_assert_eq!(s.tensor, s0.tensor);
    }

    #[test]
    fn image_channels_never_change(seed in any::<u64>()) {
        let p = active_params(small_hyper(0.5), seed);
        let img = image(seed, 6);
        let (s, _) = predict(&p, &img, 12, seed).unwrap();
        prop_assert_eq!(s.image(), img);
    }

    #[test]
    fn prediction_is_bitwise_deterministic(seed in any::<u64>()) {
        let p = active_params(small_hyper(0.5), seed);
        let img = image(seed, 6);
        let (a, _) = predict(&p, &img, 8, seed).unwrap();
        let (b, _) = predict(&p, &img, 8, seed).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.tensor), bits(&b.tensor));
    }
}
