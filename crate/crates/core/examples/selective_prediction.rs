//! Selective-prediction and failure-detection metrics on a hand-made set
//! of (Dice, uncertainty) records, plus the risk-coverage curve as SVG.
//!
//! ```text
//! cargo run --release --example selective_prediction -- [SVG_PATH]
//! ```

use nca_resilience::cli::risk_coverage_svg;
use nca_resilience::metrics::{summarize, EvalRecord, FailureRule, RiskCoverageCurve};

fn main() -> anyhow::Result<()> {
    let dice = [0.97, 0.95, 0.93, 0.91, 0.90, 0.88, 0.86, 0.72, 0.55, 0.31];
    // an informative score ranks the failures last; a shuffled one does not
    let informative: Vec<EvalRecord> = dice
        .iter()
        .enumerate()
        .map(|(i, &d)| EvalRecord::new(format!("img{i}"), d, 1.0 - d + 0.01 * (i % 3) as f64))
        .collect();
    let shuffled: Vec<EvalRecord> = dice
        .iter()
        .enumerate()
        .map(|(i, &d)| EvalRecord::new(format!("img{i}"), d, ((i * 7) % 10) as f64 / 10.0))
        .collect();

    let rule = FailureRule::default();
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
    println!("failure = dice < {}", rule.threshold);
    println!("{:<12} {:>9} {:>8} {:>8} {:>8}", "score", "dDice@90", "AURC", "AUROC", "AUPRC");
    let mut curves = Vec::new();
    for (name, recs) in [("informative", &informative), ("shuffled", &shuffled)] {
        let s = summarize(recs, rule, 0.9)?;
        println!(
            "{name:<12} {:>+9.3} {:>8.4} {:>8} {:>8}",
            s.delta_dice,
            s.aurc,
            fmt(s.auroc),
            fmt(s.auprc)
        );
        curves.push((name.to_string(), RiskCoverageCurve::from_records(recs)));
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, risk_coverage_svg(&curves))?;
        println!("wrote {path}");
    }
    Ok(())
}
