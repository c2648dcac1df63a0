//! Apply every corruption kind at each severity to one synthetic sample and
//! report how far the image (and, for geometric kinds, the mask) moves.
//!
//! ```text
//! cargo run --release --example corruptions -- [OUT_DIR]
//! ```

use nca_resilience::data::{corrupt, generate_sample, save_png_pairs, CorruptionKind};
use nca_resilience::metrics::dice;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1);
    let clean = generate_sample(3, 0, (64, 64))?;
    let mut saved = Vec::new();
    println!("{:<15} {:>3} {:>8} {:>12} {:>10}", "kind", "sev", "param", "mean |dI|", "mask dice");
    for kind in CorruptionKind::ALL {
        for severity in 1..=5u8 {
            let c = corrupt(&clean, kind, severity, 11)?;
            let diff = c
                .image
                .data()
                .iter()
                .zip(clean.image.data())
                .map(|(a, b)| (a - b).abs() as f64)
                .sum::<f64>()
                / c.image.data().len() as f64;
            println!(
                "{:<15} {:>3} {:>8.3} {:>12.4} {:>10.4}",
                kind.as_str(),
                severity,
                kind.parameter(severity).unwrap(),
                diff,
                dice(&c.mask, &clean.mask)?
            );
            if severity == 4 {
                let mut c = c;
                c.id = format!("{}_{}{}", clean.id, kind, severity);
                saved.push(c);
            }
        }
    }
    if let Some(dir) = out {
        save_png_pairs(&saved, std::path::Path::new(&dir))?;
        println!("wrote severity-4 examples to {dir}");
    }
    Ok(())
}
