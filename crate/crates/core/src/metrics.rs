//! Segmentation quality and uncertainty evaluation.
//!
//! Selective prediction ranks images from most confident (low `u`) to least
//! confident (high `u`) and measures the Dice of what is kept. Failure
//! detection treats `u` as a classifier score for `dice < threshold`.
//! Ties in `u` are always broken by `image_id`, so every metric is a
//! deterministic function of the record set.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::grid::BinaryMask;

fn check_dims(op: &'static str, a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> (usize, usize, usize) {
    let mut inter = 0;
    let (mut na, mut nb) = (0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    (inter, na, nb)
}

/// `2|a ∩ b| / (|a| + |b|)`, 1 when both are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_dims("dice", a, b)?;
    let (inter, na, nb) = overlap(a, b);
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// `|a ∩ b| / |a ∪ b|`, 1 when both are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_dims("iou", a, b)?;
    let (inter, na, nb) = overlap(a, b);
    let union = na + nb - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn pixel_accuracy(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_dims("pixel_accuracy", a, b)?;
    let n = a.data().len();
    if n == 0 {
        return Ok(1.0);
    }
    let same = a.data().iter().zip(b.data()).filter(|(x, y)| x == y).count();
    Ok(same as f64 / n as f64)
}

/// Per-image quality and uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub dice: f64,
    pub u: f64,
}

impl EvalRecord {
    pub fn new(image_id: impl Into<String>, dice: f64, u: f64) -> Self {
        Self {
            image_id: image_id.into(),
            dice,
            u,
        }
    }
}

/// Labels an image a failure when its Dice is below `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureRule {
    pub threshold: f64,
}

impl Default for FailureRule {
    fn default() -> Self {
        Self { threshold: 0.8 }
    }
}

impl FailureRule {
    pub fn is_failure(&self, record: &EvalRecord) -> bool {
        record.dice < self.threshold
    }
}

fn confidence_order(a: &EvalRecord, b: &EvalRecord) -> Ordering {
    a.u.total_cmp(&b.u).then_with(|| a.image_id.cmp(&b.image_id))
}

/// Records from most to least confident.
pub fn rank_by_confidence(records: &[EvalRecord]) -> Vec<&EvalRecord> {
    let mut v: Vec<&EvalRecord> = records.iter().collect();
    v.sort_by(|a, b| confidence_order(a, b));
    v
}

/// Number of records retained at `coverage`: `ceil(coverage · n)`.
pub fn retained_count(n: usize, coverage: f64) -> usize {
    ((coverage * n as f64) - 1e-9).ceil().max(1.0) as usize
}

fn mean_dice(records: &[&EvalRecord]) -> f64 {
    records.iter().map(|r| r.dice).sum::<f64>() / records.len() as f64
}

/// `100 · (mean Dice of the most confident ⌈coverage·N⌉ − mean Dice of all)`.
pub fn delta_dice_at(records: &[EvalRecord], coverage: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("delta_dice_at needs at least one record"));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid(format!("coverage must be in (0, 1], got {coverage}")));
    }
    let ranked = rank_by_confidence(records);
    let k = retained_count(records.len(), coverage);
    Ok(100.0 * (mean_dice(&ranked[..k]) - mean_dice(&ranked)))
}

/// Risk (1 − Dice) of the `k` most confident records for `k = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCoverageCurve {
    pub points: Vec<(f64, f64)>,
}

impl RiskCoverageCurve {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let ranked = rank_by_confidence(records);
        let n = ranked.len();
        let mut cumulative = 0.0;
        let points = ranked
            .iter()
            .enumerate()
            .map(|(i, r)| {
                cumulative += 1.0 - r.dice;
                let k = i + 1;
                (k as f64 / n as f64, cumulative / k as f64)
            })
            .collect();
        Self { points }
    }

    /// Mean of the prefix risks.
    pub fn area(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|&(_, r)| r).sum::<f64>() / self.points.len() as f64
    }
}

/// Area under the risk–coverage curve, with the curve itself.
pub fn aurc(records: &[EvalRecord]) -> Result<(f64, RiskCoverageCurve)> {
    if records.is_empty() {
        return Err(Error::invalid("aurc needs at least one record"));
    }
    let curve = RiskCoverageCurve::from_records(records);
    Ok((curve.area(), curve))
}

/// Mann–Whitney AUROC of `u` for failures vs non-failures, midranks on ties.
///
/// `None` when either class is absent.
pub fn auroc(records: &[EvalRecord], rule: FailureRule) -> Option<f64> {
    let n_pos = records.iter().filter(|r| rule.is_failure(r)).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.u.total_cmp(&b.u));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].u == sorted[i].u {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = sorted[i..=j].iter().filter(|r| rule.is_failure(r)).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let u_stat = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u_stat / (n_pos * n_neg) as f64)
}

/// Average precision of `u` for detecting failures.
///
/// Records are visited from highest to lowest `u`; each failure contributes
/// the precision at its cut times `1 / n_failures`. `None` without failures.
pub fn auprc(records: &[EvalRecord], rule: FailureRule) -> Option<f64> {
    let n_pos = records.iter().filter(|r| rule.is_failure(r)).count();
    if n_pos == 0 {
        return None;
    }
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.u.total_cmp(&a.u).then_with(|| a.image_id.cmp(&b.image_id)));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (i, r) in sorted.iter().enumerate() {
        if rule.is_failure(r) {
            hits += 1;
            ap += hits as f64 / (i + 1) as f64;
        }
    }
    Some(ap / n_pos as f64)
}

/// All four uncertainty metrics for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub delta_dice: f64,
    pub aurc: f64,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub failure_threshold: f64,
    pub coverage: f64,
    pub n_images: usize,
    pub n_failures: usize,
}

pub fn summarize(records: &[EvalRecord], rule: FailureRule, coverage: f64) -> Result<MetricsSummary> {
    Ok(MetricsSummary {
        delta_dice: delta_dice_at(records, coverage)?,
        aurc: aurc(records)?.0,
        auroc: auroc(records, rule),
        auprc: auprc(records, rule),
        failure_threshold: rule.threshold,
        coverage,
        n_images: records.len(),
        n_failures: records.iter().filter(|r| rule.is_failure(r)).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(bits: &[u8], w: usize) -> BinaryMask {
        BinaryMask::new(bits.len() / w, w, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    fn recs(pairs: &[(f64, f64)]) -> Vec<EvalRecord> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(d, u))| EvalRecord::new(format!("img{i:03}"), d, u))
            .collect()
    }

    #[test]
    fn dice_cases() {
        let a = mask(&[1, 1, 1, 1, 0, 0, 0, 0], 4);
        let b = mask(&[0, 0, 1, 1, 1, 1, 0, 0], 4);
        let empty = mask(&[0; 8], 4);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        let c = mask(&[0, 0, 0, 0, 1, 1, 1, 1], 4);
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
        assert!(dice(&a, &mask(&[0; 6], 3)).is_err());
    }

    #[test]
    fn iou_and_accuracy_cases() {
        let a = mask(&[1, 1, 0, 0], 2);
        let comp = mask(&[0, 0, 1, 1], 2);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(pixel_accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &comp).unwrap(), 0.0);
        assert_eq!(pixel_accuracy(&a, &comp).unwrap(), 0.0);
        let empty = mask(&[0; 4], 2);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert!(iou(&a, &mask(&[0; 3], 3)).is_err());
    }

    proptest! {
        #[test]
        fn dice_iou_identity(bits in proptest::collection::vec(0u8..2, 2 * 16..=2 * 16)) {
            let a = mask(&bits[..16], 4);
            let b = mask(&bits[16..], 4);
            let d = dice(&a, &b).unwrap();
            let i = iou(&a, &b).unwrap();
            prop_assert!((d - 2.0 * i / (1.0 + i)).abs() < 1e-12);
            prop_assert_eq!(i, iou(&b, &a).unwrap());
        }

        #[test]
        fn ranking_metrics_invariant_under_monotone_transform(
            pairs in proptest::collection::vec((0.0f64..1.0, -5.0f64..5.0), 2..40)
        ) {
            let r = recs(&pairs);
            let t: Vec<EvalRecord> = r.iter()
                .map(|x| EvalRecord::new(x.image_id.clone(), x.dice, (x.u * 0.7).exp() + 3.0))
                .collect();
            let rule = FailureRule::default();
            prop_assert_eq!(delta_dice_at(&r, 0.9).unwrap(), delta_dice_at(&t, 0.9).unwrap());
            prop_assert_eq!(aurc(&r).unwrap().0, aurc(&t).unwrap().0);
            prop_assert_eq!(auroc(&r, rule), auroc(&t, rule));
            prop_assert_eq!(auprc(&r, rule), auprc(&t, rule));
            prop_assert_eq!(delta_dice_at(&r, 1.0).unwrap(), 0.0);
        }

        #[test]
        fn curve_grid_and_range(pairs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..1.0), 1..30)) {
            let r = recs(&pairs);
            let (_, curve) = aurc(&r).unwrap();
            let n = r.len();
            for (k, &(cov, risk)) in curve.points.iter().enumerate() {
                prop_assert_eq!(cov, (k + 1) as f64 / n as f64);
                prop_assert!((0.0..=1.0).contains(&risk));
            }
        }
    }

    #[test]
    fn delta_dice_examples() {
        let same = recs(&[(0.7, 0.1), (0.7, 0.9), (0.7, 0.5)]);
        assert!(delta_dice_at(&same, 0.9).unwrap().abs() < 1e-12);
        let mut ten: Vec<(f64, f64)> = (0..9).map(|i| (1.0, i as f64 / 10.0)).collect();
        ten.push((0.0, 5.0));
        let d = delta_dice_at(&recs(&ten), 0.9).unwrap();
        assert!((d - 10.0).abs() < 1e-9, "{d}");
        assert!(delta_dice_at(&[], 0.9).is_err());
    }

    #[test]
    fn aurc_examples() {
        assert_eq!(aurc(&recs(&[(1.0, 0.3), (1.0, 0.2)])).unwrap().0, 0.0);
        let d = aurc(&recs(&[(0.6, 0.3), (0.6, 0.1), (0.6, 0.2)])).unwrap().0;
        assert!((d - 0.4).abs() < 1e-12);
        let two = aurc(&recs(&[(1.0, 0.1), (0.0, 0.9)])).unwrap();
        assert_eq!(two.1.points, vec![(0.5, 0.0), (1.0, 0.5)]);
        assert_eq!(two.0, 0.25);
    }

    #[test]
    fn auroc_examples() {
        let rule = FailureRule::default();
        let perfect = recs(&[(0.9, 0.1), (0.95, 0.2), (0.3, 0.8), (0.1, 0.7)]);
        assert_eq!(auroc(&perfect, rule), Some(1.0));
        let ties = recs(&[(0.9, 0.5), (0.3, 0.5), (0.95, 0.5), (0.1, 0.5)]);
        assert_eq!(auroc(&ties, rule), Some(0.5));
        let all_fail = recs(&[(0.1, 0.5), (0.2, 0.4)]);
        assert_eq!(auroc(&all_fail, rule), None);
        let no_fail = recs(&[(0.9, 0.5), (0.95, 0.4)]);
        assert_eq!(auroc(&no_fail, rule), None);
        assert_eq!(auprc(&no_fail, rule), None);
    }

    #[test]
    fn auroc_negation_symmetry() {
        let rule = FailureRule::default();
        let r = recs(&[(0.9, 0.1), (0.3, 0.15), (0.95, 0.6), (0.1, 0.7), (0.85, 0.3)]);
        let neg: Vec<EvalRecord> = r
            .iter()
            .map(|x| EvalRecord::new(x.image_id.clone(), x.dice, -x.u))
            .collect();
        let a = auroc(&r, rule).unwrap();
        let b = auroc(&neg, rule).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auprc_examples() {
        let rule = FailureRule::default();
        let first = recs(&[(0.1, 0.9), (0.9, 0.5), (0.9, 0.4), (0.9, 0.3)]);
        assert_eq!(auprc(&first, rule), Some(1.0));
        let last = recs(&[(0.1, 0.0), (0.9, 0.5), (0.9, 0.4), (0.9, 0.3), (0.95, 0.2)]);
        assert!((auprc(&last, rule).unwrap() - 0.2).abs() < 1e-12);
    }
}
