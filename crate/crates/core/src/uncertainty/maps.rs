//! Per-pixel uncertainty maps and their band aggregation.

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FloatMap};

/// Largest `f32` not above ln 2; the nearest `f32` to ln 2 lies above it.
const MAX_ENTROPY: f32 = f32::from_bits(std::f32::consts::LN_2.to_bits() - 1);

/// Two-class Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn binary_entropy(p: f32) -> f32 {
    let p = f64::from(p).clamp(0.0, 1.0);
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    ((term(p) + term(1.0 - p)) as f32).min(MAX_ENTROPY)
}

pub fn entropy_map(prob: &FloatMap) -> FloatMap {
    let (h, w) = prob.dims();
    FloatMap::from_fn(h, w, |y, x| binary_entropy(*prob.get(y, x)))
}

fn check_same<T, U>(what: &'static str, a: &crate::grid::Map<T>, b: &crate::grid::Map<U>) -> Result<()> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(Error::shape(
            what,
            format!("{:?} vs {:?}", a.dims(), b.dims()),
        ))
    }
}

/// Mean absolute successive difference over a probability sequence; a
/// sequence of `W + 1` maps covers `W` transitions.
pub fn stability_map(probs: &[FloatMap]) -> Result<FloatMap> {
    if probs.len() < 2 {
        return Err(Error::invalid("stability needs at least two maps"));
    }
    for p in &probs[1..] {
        check_same("stability_map", &probs[0], p)?;
    }
    let (h, w) = probs[0].dims();
    let transitions = (probs.len() - 1) as f64;
    Ok(FloatMap::from_fn(h, w, |y, x| {
        let total: f64 = probs
            .windows(2)
            .map(|pair| f64::from((*pair[1].get(y, x) - *pair[0].get(y, x)).abs()))
            .sum();
        (total / transitions) as f32
    }))
}

/// Fraction of consecutive mask pairs that change at each pixel.
pub fn flicker_map(masks: &[BinaryMask]) -> Result<FloatMap> {
    if masks.len() < 2 {
        return Err(Error::invalid("flicker needs at least two masks"));
    }
    for m in &masks[1..] {
        check_same("flicker_map", &masks[0], m)?;
    }
    let (h, w) = masks[0].dims();
    let pairs = (masks.len() - 1) as f64;
    Ok(FloatMap::from_fn(h, w, |y, x| {
        let flips = masks
            .windows(2)
            .filter(|pair| pair[0].get(y, x) != pair[1].get(y, x))
            .count();
        (flips as f64 / pairs) as f32
    }))
}

/// Fraction of checkpoint masks that disagree with the final mask.
pub fn stoptime_map(checkpoints: &[&BinaryMask], last: &BinaryMask) -> Result<FloatMap> {
    if checkpoints.is_empty() {
        return Err(Error::invalid("stoptime needs at least one checkpoint"));
    }
    for m in checkpoints {
        check_same("stoptime_map", last, *m)?;
    }
    let (h, w) = last.dims();
    let k = checkpoints.len() as f64;
    Ok(FloatMap::from_fn(h, w, |y, x| {
        let differ = checkpoints
            .iter()
            .filter(|m| m.get(y, x) != last.get(y, x))
            .count();
        (differ as f64 / k) as f32
    }))
}

/// Band statistics of a map. `fallback` marks an empty band, in which case
/// both statistics are taken over the whole image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    pub mean: f64,
    pub p95: f64,
    pub fallback: bool,
}

/// Nearest-rank percentile of `values` (need not be sorted).
pub fn nearest_rank(values: &[f32], pct: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v: Vec<f32> = values.to_vec();
    v.sort_by(f32::total_cmp);
    let rank = ((pct / 100.0) * v.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    f64::from(v[rank.min(v.len()) - 1])
}

pub fn aggregate_map(map: &FloatMap, band: &BinaryMask) -> Result<BandStats> {
    check_same("aggregate_map", map, band)?;
    let mut inside: Vec<f32> = map
        .data()
        .iter()
        .zip(band.data())
        .filter(|(_, &b)| b)
        .map(|(&v, _)| v)
        .collect();
    let fallback = inside.is_empty();
    if fallback {
        inside = map.data().to_vec();
    }
    if inside.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty map"));
    }
    let mean = inside.iter().map(|&v| f64::from(v)).sum::<f64>() / inside.len() as f64;
    Ok(BandStats {
        mean,
        p95: nearest_rank(&inside, 95.0),
        fallback,
    })
}
