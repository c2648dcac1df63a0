//! Shared test helpers: finite-difference checking and brute-force metric
//! oracles written independently of the library code.

#![allow(dead_code)]

use std::sync::Arc;

use nca_resilience::autodiff::{Graph, Tensor, Var};
use nca_resilience::metrics::EvalRecord;
use rand::seq::SliceRandom;
use rand::Rng;

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Weighted readout `Σ_rows (r · y_row)²` evaluated in f64.
pub fn weighted_square(y: &Tensor, r: &[f32]) -> f64 {
    let c = r.len();
    y.data()
        .chunks_exact(c)
        .map(|row| {
            let s: f64 = row.iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).sum();
            s * s
        })
        .sum()
}

/// Result of a gradient check: analytic and central-difference gradients.
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    pub fn rel_err(&self) -> f64 {
        rel_err(&self.analytic, &self.numeric, 1e-6)
    }
}

/// Checks the gradient of `build(graph, x)` with respect to `x`.
///
/// Tensor outputs are reduced with a fixed random channel weighting so the
/// check sees every output element; scalar outputs are used directly. The
/// numeric side evaluates the same reduction in f64 at `x ± h`.
pub fn grad_check(
    x: &Tensor,
    h: f32,
    seed: u64,
    build: impl Fn(&mut Graph, Var) -> Var,
) -> GradCheck {
    let probe = {
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let y = build(&mut g, v);
        g.value(y).clone()
    };
    let scalar = probe.shape().is_empty();
    let c = probe.last_dim();
    let mut rng = nca_resilience::nca::seeded_rng(seed, 77);
    let r: Vec<f32> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut g = Graph::new();
    let v = g.input(x.clone().with_grad());
    let y = build(&mut g, v);
    let loss = if scalar {
        y
    } else {
        let w = g.input(Tensor::new(vec![1, c], r.clone()).unwrap());
        let z = g.pointwise_affine(y, w, None).unwrap();
        let z = g.square(z);
        g.sum(z)
    };
    g.backward(loss).unwrap();
    let analytic: Vec<f64> = g.grad(v).unwrap().iter().map(|&v| v as f64).collect();

    let eval = |xp: Tensor| -> f64 {
        let mut g = Graph::new();
        let v = g.input(xp);
        let y = build(&mut g, v);
        if scalar {
            g.value(y).data()[0] as f64
        } else {
            weighted_square(g.value(y), &r)
        }
    };
    let numeric = (0..x.len())
        .map(|i| {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let dx = (plus.data()[i] as f64) - (minus.data()[i] as f64);
            (eval(plus) - eval(minus)) / dx
        })
        .collect();
    GradCheck { analytic, numeric }
}

pub fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks stay outside `x ± h`.
pub fn away_from_zero(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f32 = rng.random_range(0.05..1.0);
            if rng.random::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

pub fn arc<T: Clone>(v: &[T]) -> Arc<[T]> {
    v.to_vec().into()
}

/// A random record set: `n` records with shuffled unique ids; `u` and
/// Dice are drawn from coarse grids about half the time so ties occur.
pub fn random_records(rng: &mut impl Rng, n: usize) -> Vec<EvalRecord> {
    let coarse = rng.random::<bool>();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    ids.into_iter()
        .map(|id| {
            let u = if coarse {
                rng.random_range(0..6) as f64 / 5.0
            } else {
                rng.random::<f64>()
            };
            let dice = if coarse {
                rng.random_range(0..11) as f64 / 10.0
            } else {
                rng.random::<f64>()
            };
            EvalRecord::new(format!("img{id:03}"), dice, u)
        })
        .collect()
}

/// `a` is more confident than `b`: lower `u`, ties by id.
fn before(a: &EvalRecord, b: &EvalRecord) -> bool {
    a.u < b.u || (a.u == b.u && a.image_id < b.image_id)
}

/// Confidence rank of every record by counting, no sorting.
fn ranks(records: &[EvalRecord]) -> Vec<usize> {
    records
        .iter()
        .map(|r| records.iter().filter(|o| before(o, r)).count())
        .collect()
}

/// ΔDice at an integer percentage coverage: keep `⌈pct·N/100⌉` records.
pub fn oracle_delta_dice(records: &[EvalRecord], pct: usize) -> f64 {
    let n = records.len();
    let k = (pct * n).div_ceil(100);
    let rank = ranks(records);
    let kept: Vec<f64> = records
        .iter()
        .zip(&rank)
        .filter(|(_, &rk)| rk < k)
        .map(|(r, _)| r.dice)
        .collect();
    let all = records.iter().map(|r| r.dice).sum::<f64>() / n as f64;
    100.0 * (kept.iter().sum::<f64>() / kept.len() as f64 - all)
}

pub fn oracle_aurc(records: &[EvalRecord]) -> f64 {
    let n = records.len();
    let rank = ranks(records);
    let mut total = 0.0;
    for k in 1..=n {
        let risk: f64 = records
            .iter()
            .zip(&rank)
            .filter(|(_, &rk)| rk < k)
            .map(|(r, _)| 1.0 - r.dice)
            .sum();
        total += risk / k as f64;
    }
    total / n as f64
}

/// AUROC by counting failure/success pairs, ties worth one half.
pub fn oracle_auroc(records: &[EvalRecord], threshold: f64) -> Option<f64> {
    let fail: Vec<f64> = records.iter().filter(|r| r.dice < threshold).map(|r| r.u).collect();
    let ok: Vec<f64> = records.iter().filter(|r| r.dice >= threshold).map(|r| r.u).collect();
    if fail.is_empty() || ok.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &f in &fail {
        for &s in &ok {
            if f > s {
                wins += 1.0;
            } else if f == s {
                wins += 0.5;
            }
        }
    }
    Some(wins / (fail.len() * ok.len()) as f64)
}

/// Average precision from an explicit cumulative precision–recall curve,
/// ranking by `u` descending with ties by id ascending.
pub fn oracle_auprc(records: &[EvalRecord], threshold: f64) -> Option<f64> {
    let n_fail = records.iter().filter(|r| r.dice < threshold).count();
    if n_fail == 0 {
        return None;
    }
    let mut order: Vec<&EvalRecord> = records.iter().collect();
    order.sort_by(|a, b| b.u.total_cmp(&a.u).then_with(|| a.image_id.cmp(&b.image_id)));
    let mut precision = Vec::new();
    let mut recall = vec![0.0];
    let mut tp = 0usize;
    for (i, r) in order.iter().enumerate() {
        if r.dice < threshold {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_fail as f64);
    }
    Some(
        (0..order.len())
            .map(|i| (recall[i + 1] - recall[i]) * precision[i])
            .sum(),
    )
}
