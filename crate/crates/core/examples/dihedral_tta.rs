//! The eight dihedral transforms used for test-time augmentation, and the
//! exact warp / inverse-warp round trip.
//!
//! ```text
//! cargo run --release --example dihedral_tta
//! ```

use nca_resilience::grid::Map;
use nca_resilience::uncertainty::{tta_set, Dihedral, UncertaintyConfig};

fn show(m: &Map<char>) -> String {
    (0..m.height())
        .map(|y| (0..m.width()).map(|x| *m.get(y, x)).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    let letters: Vec<char> = "abcdefghi".chars().collect();
    let grid = Map::from_fn(3, 3, |y, x| letters[y * 3 + x]);
    println!("{:<15} {:<12} {:<15} round trip", "transform", "result", "inverse");
    for t in Dihedral::ALL {
        let warped = t.apply_map(&grid);
        let back = t.inverse().apply_map(&warped);
        println!(
            "{:<15} {:<12} {:<15} {}",
            t.name(),
            show(&warped),
            t.inverse().name(),
            if back == grid { "exact" } else { "BROKEN" }
        );
    }
    let cfg = UncertaintyConfig::default();
    let rect: Vec<&str> = tta_set(&cfg, 48, 64).iter().map(|t| t.name()).collect();
    println!("\nfor a 48x64 image only the shape-preserving ones apply: {}", rect.join(", "));
}
