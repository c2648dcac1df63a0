//! Risk–coverage plot as plain SVG text.

use std::fmt::Write as _;

use crate::metrics::RiskCoverageCurve;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One polyline per curve over a fixed 480×360 viewbox; coverage on x in
/// `[0, 1]`, risk on y from 0 up to the largest observed risk.
pub fn risk_coverage_svg(curves: &[(String, RiskCoverageCurve)]) -> String {
    let (w, h, pad) = (480.0, 360.0, 48.0);
    let max_risk = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.1))
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let sx = |c: f64| pad + c * (w - 2.0 * pad);
    let sy = |r: f64| h - pad - r / max_risk * (h - 2.0 * pad);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<polyline points="{},{} {},{} {},{}" fill="none" stroke="black"/>"#,
        sx(0.0),
        sy(max_risk),
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(0.0)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">coverage</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">risk (1 - Dice), max {max_risk:.4}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|&(c, r)| format!("{:.2},{:.2}", sx(c), sy(r)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{name}</text>"#,
            w - pad - 80.0,
            pad + 14.0 * i as f64
        );
    }
    out.push_str("</svg>\n");
    out
}
