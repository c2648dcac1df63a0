//! Dilation, erosion and the boundary band on a small mask, including how
//! the band behaves at the image border.
//!
//! ```text
//! cargo run --release --example boundary_band
//! ```

#[path = "common/mod.rs"]
mod common;

use nca_resilience::grid::{BinaryMask, FloatMap};
use nca_resilience::uncertainty::{aggregate_map, boundary_band, dilate, erode};

fn main() -> anyhow::Result<()> {
    // a disc touching the right edge
    let mask = BinaryMask::from_fn(14, 20, |y, x| {
        let (dy, dx) = (y as f32 - 6.5, x as f32 - 15.0);
        dy * dy + dx * dx <= 25.0
    });
    for r in [1usize, 2] {
        println!("r = {r}");
        println!("mask:\n{}", common::ascii_mask(&mask));
        println!("dilated:\n{}", common::ascii_mask(&dilate(&mask, r)));
        println!("eroded:\n{}", common::ascii_mask(&erode(&mask, r)));
        let band = boundary_band(&mask, r);
        println!("band ({} px):\n{}", band.count(), common::ascii_mask(&band));
    }

    // aggregation of a toy uncertainty map over the band
    let map = FloatMap::from_fn(14, 20, |y, x| ((x + y) % 5) as f32 / 4.0);
    let stats = aggregate_map(&map, &boundary_band(&mask, 2))?;
    println!("band mean {:.4}, p95 {:.4}, fallback {}", stats.mean, stats.p95, stats.fallback);
    let empty = BinaryMask::filled(14, 20, false);
    let stats = aggregate_map(&map, &boundary_band(&empty, 2))?;
    println!(
        "empty prediction: band is empty, whole-image mean {:.4} used (fallback {})",
        stats.mean, stats.fallback
    );
    Ok(())
}
