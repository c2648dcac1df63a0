mod common;

use std::sync::Arc;

use nca_resilience::autodiff::{kernels, Graph, Tensor};
use nca_resilience::nca::{perception_kernels, seeded_rng};
use proptest::prelude::*;

use common::{arc, random_tensor};

/// Direct replicate-padded correlation, one output element at a time.
fn conv_oracle(input: &[f32], h: usize, w: usize, c: usize, kernels: &[f32]) -> Vec<f32> {
    let k = kernels.len() / 9;
    let mut out = vec![0.0; h * w * c * k];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                for j in 0..k {
                    let mut s = 0.0f64;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                            let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                            let wt = kernels[j * 9 + ((dy + 1) * 3 + dx + 1) as usize];
                            s += wt as f64 * input[(sy * w + sx) * c + ch] as f64;
                        }
                    }
                    out[((y * w + x) * c + ch) * k + j] = s as f32;
                }
            }
        }
    }
    out
}

fn ramp_x(h: usize, w: usize, c: usize) -> Vec<f32> {
    (0..h * w * c).map(|i| ((i / c) % w) as f32).collect()
}

#[test]
fn identity_filter_copies_input() {
    let mut rng = seeded_rng(1, 0);
    let x = random_tensor(&mut rng, vec![5, 6, 4], -1.0, 1.0);
    let out = kernels::conv3x3_forward(x.data(), 5, 6, 4, perception_kernels().data());
    for (cell, src) in out.chunks(12).zip(x.data().chunks(4)) {
        for ch in 0..4 {
            assert_eq!(cell[ch * 3], src[ch]);
        }
    }
}

#[test]
fn sobel_on_horizontal_ramp() {
    let (h, w, c) = (6, 7, 2);
    let out = kernels::conv3x3_forward(&ramp_x(h, w, c), h, w, c, perception_kernels().data());
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let cell = &out[(y * w + x) * c * 3..(y * w + x + 1) * c * 3];
            for ch in 0..c {
                assert_eq!(cell[ch * 3 + 1], 8.0, "sobel-x at ({y},{x})");
                assert_eq!(cell[ch * 3 + 2], 0.0, "sobel-y at ({y},{x})");
            }
        }
    }
    // replicate padding halves the response at the left border
    assert_eq!(out[(2 * w) * c * 3 + 1], 4.0);
}

#[test]
fn sobel_y_on_vertical_ramp() {
    let (h, w, c) = (5, 5, 1);
    let input: Vec<f32> = (0..h * w).map(|i| (i / w) as f32).collect();
    let out = kernels::conv3x3_forward(&input, h, w, c, perception_kernels().data());
    assert_eq!(out[(2 * w + 2) * 3 + 2], 8.0);
    assert_eq!(out[(2 * w + 2) * 3 + 1], 0.0);
}

proptest! {
    #[test]
    fn conv_matches_oracle(h in 3usize..8, w in 3usize..8, c in 1usize..5, k in 1usize..4, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 0);
        let x = random_tensor(&mut rng, vec![h, w, c], -1.0, 1.0);
        let kern = random_tensor(&mut rng, vec![k, 3, 3], -1.0, 1.0);
        let got = kernels::conv3x3_forward(x.data(), h, w, c, kern.data());
        let want = conv_oracle(x.data(), h, w, c, kern.data());
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn conv_at_cells_matches_full_rows(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = seeded_rng(seed, 0);
        use rand::Rng;
        let (h, w, c) = (5, 4, 3);
        let x = random_tensor(&mut rng, vec![h, w, c], -1.0, 1.0);
        let k = perception_kernels();
        let cells: Vec<usize> = (0..n).map(|_| rng.random_range(0..h * w)).collect();
        let full = kernels::conv3x3_forward(x.data(), h, w, c, k.data());
        let part = kernels::conv3x3_forward_at(x.data(), h, w, c, k.data(), &cells);
        for (i, &cell) in cells.iter().enumerate() {
            prop_assert_eq!(&part[i * 9..(i + 1) * 9], &full[cell * 9..(cell + 1) * 9]);
        }
    }
}

#[test]
fn softmax_reference_values() {
    let p = kernels::softmax_forward(&[0.0, 2.0], 2);
    assert!((p[0] - 0.1192).abs() < 1e-4);
    assert!((p[1] - 0.8808).abs() < 1e-4);
    // large logits stay finite thanks to max subtraction
    let q = kernels::softmax_forward(&[1000.0, 1000.0], 2);
    assert_eq!(q, vec![0.5, 0.5]);
}

#[test]
fn cross_entropy_of_uniform_probs_is_ln2() {
    let mut g = Graph::new();
    let p = g.input(Tensor::full(vec![3, 3, 2], 0.5));
    let loss = g.cross_entropy_loss(p, arc(&[0, 1, 0, 1, 1, 0, 0, 0, 1])).unwrap();
    assert!((g.value(loss).item() - std::f32::consts::LN_2).abs() < 1e-6);
}

#[test]
fn cross_entropy_floor_keeps_saturated_loss_finite() {
    let mut g = Graph::new();
    let p = g.input(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
    let loss = g.cross_entropy_loss(p, arc(&[1])).unwrap();
    let v = g.value(loss).item();
    assert!(v.is_finite());
    assert!((v - 1e-8f32.ln().abs()).abs() < 1e-3);
}

#[test]
fn sum_and_square_backward() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![4], vec![1.0, -2.0, 0.5, 3.0]).unwrap().with_grad());
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 4]);

    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![4], vec![1.0, -2.0, 0.5, 3.0]).unwrap().with_grad());
    let sq = g.square(x);
    let s = g.sum(sq);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 1.0, 6.0]);
}

#[test]
fn gradients_accumulate_until_cleared() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad());
    let sq = g.square(x);
    let s = g.sum(sq);
    g.backward(s).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[4.0, 8.0]);
    g.zero_grad();
    assert!(g.grad(x).is_none());
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.input(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let s = g.sum(c);
    g.backward(s).unwrap();
    assert!(g.grad(c).is_none());
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![2, 2]).with_grad());
    assert!(g.backward(x).is_err());
}

#[test]
fn shape_errors_are_reported() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(vec![4, 3]));
    let w = g.input(Tensor::zeros(vec![2, 5]));
    assert!(g.pointwise_affine(x, w, None).is_err());
    assert!(g.depthwise_conv3x3(x, perception_kernels()).is_err());
    assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    let img = g.input(Tensor::zeros(vec![4, 4, 2]));
    assert!(g
        .depthwise_conv3x3_at(img, perception_kernels(), arc(&[16]))
        .is_err());
    assert!(g.select_channels(img, 1, 2).is_err());
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut rng = seeded_rng(5, 0);
        let mut g = Graph::new();
        let x = g.input(random_tensor(&mut rng, vec![6, 6, 3], -1.0, 1.0).with_grad());
        let w = g.input(random_tensor(&mut rng, vec![4, 9], -1.0, 1.0).with_grad());
        let p = g.depthwise_conv3x3(x, perception_kernels()).unwrap();
        let a = g.pointwise_affine(p, w, None).unwrap();
        let r = g.relu(a);
        let sq = g.square(r);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        (g.grad(x).unwrap().to_vec(), g.grad(w).unwrap().to_vec())
    };
    let (a, b) = (run(), run());
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
}

#[test]
fn gather_scatter_round_trip_values() {
    let mut g = Graph::new();
    let base = g.input(Tensor::new(vec![3, 4], (0..12).map(|v| v as f32).collect()).unwrap());
    let rows: Arc<[usize]> = arc(&[2, 0]);
    let picked = g.gather_rows(base, rows.clone()).unwrap();
    assert_eq!(g.value(picked).data(), &[8.0, 9.0, 10.0, 11.0, 0.0, 1.0, 2.0, 3.0]);
    let upd = g.input(Tensor::full(vec![2, 2], 1.0));
    let out = g.scatter_add_rows(base, upd, rows, 1).unwrap();
    assert_eq!(
        g.value(out).data(),
        &[0.0, 2.0, 3.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 11.0, 11.0]
    );
}
