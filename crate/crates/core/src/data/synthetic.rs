//! Seeded synthetic shape-segmentation data.
//!
//! Each image has a dim, low-saturation textured background and one to
//! three saturated shapes (ellipses, rectangles, wobbly blobs). The mask is
//! the union of the shapes. Images whose foreground fraction falls outside
//! `[MIN_FOREGROUND, MAX_FOREGROUND]` are redrawn.

use std::f32::consts::PI;

use rand::Rng;

use super::{Dataset, Provenance, Sample};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RgbImage};
use crate::nca::{seeded_rng, SeededRng};

pub const DEFAULT_SIZE: (usize, usize) = (64, 64);
pub const MIN_FOREGROUND: f32 = 0.05;
pub const MAX_FOREGROUND: f32 = 0.6;

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ellipse {
        cy: f32,
        cx: f32,
        ry: f32,
        rx: f32,
        angle: f32,
    },
    Rect {
        y0: f32,
        x0: f32,
        y1: f32,
        x1: f32,
    },
    Blob {
        cy: f32,
        cx: f32,
        radius: f32,
        harmonics: [(f32, f32, f32); 3],
    },
}

impl Shape {
    fn random(rng: &mut SeededRng, h: f32, w: f32) -> Self {
        let scale = h.min(w) / 64.0;
        let cy = rng.random_range(0.15 * h..0.85 * h);
        let cx = rng.random_range(0.15 * w..0.85 * w);
        match rng.random_range(0..3) {
            0 => Shape::Ellipse {
                cy,
                cx,
                ry: rng.random_range(5.0..16.0) * scale,
                rx: rng.random_range(5.0..16.0) * scale,
                angle: rng.random_range(0.0..PI),
            },
            1 => {
                let hh = rng.random_range(4.0..14.0) * scale;
                let hw = rng.random_range(4.0..14.0) * scale;
                Shape::Rect {
                    y0: cy - hh,
                    x0: cx - hw,
                    y1: cy + hh,
                    x1: cx + hw,
                }
            }
            _ => {
                let mut harmonics = [(0.0, 0.0, 0.0); 3];
                for (i, hm) in harmonics.iter_mut().enumerate() {
                    *hm = (
                        (i + 2) as f32,
                        rng.random_range(0.0..0.25),
                        rng.random_range(0.0..2.0 * PI),
                    );
                }
                Shape::Blob {
                    cy,
                    cx,
                    radius: rng.random_range(6.0..15.0) * scale,
                    harmonics,
                }
            }
        }
    }

    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Ellipse {
                cy,
                cx,
                ry,
                rx,
                angle,
            } => {
                let (s, c) = angle.sin_cos();
                let (dy, dx) = (y - cy, x - cx);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
            Shape::Blob {
                cy,
                cx,
                radius,
                harmonics,
            } => {
                let (dy, dx) = (y - cy, x - cx);
                let theta = dy.atan2(dx);
                let wobble: f32 = harmonics
                    .iter()
                    .map(|&(k, a, phase)| a * (k * theta + phase).sin())
                    .sum();
                (dy * dy + dx * dx).sqrt() <= radius * (1.0 + wobble)
            }
        }
    }
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as i32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Sum of a few random plane waves, roughly in `[-amp, amp]`.
struct Texture {
    waves: Vec<(f32, f32, f32, f32)>,
}

impl Texture {
    fn random(rng: &mut SeededRng, amp: f32) -> Self {
        let waves = (0..3)
            .map(|_| {
                let freq = rng.random_range(0.05..0.3);
                let dir = rng.random_range(0.0..2.0 * PI);
                (
                    freq * dir.cos(),
                    freq * dir.sin(),
                    rng.random_range(0.0..2.0 * PI),
                    amp / 3.0,
                )
            })
            .collect();
        Self { waves }
    }

    fn at(&self, y: f32, x: f32) -> f32 {
        self.waves
            .iter()
            .map(|&(fy, fx, ph, a)| a * (fy * y + fx * x + ph).sin())
            .sum()
    }
}

fn draw(rng: &mut SeededRng, h: usize, w: usize) -> (RgbImage, BinaryMask) {
    let gray = rng.random_range(0.15..0.5);
    let tint: [f32; 3] = std::array::from_fn(|_| rng.random_range(-0.06..0.06));
    let bg_texture = Texture::random(rng, 0.08);

    let n_shapes = rng.random_range(1..=3);
    let shapes: Vec<(Shape, [f32; 3], (f32, f32))> = (0..n_shapes)
        .map(|_| {
            let shape = Shape::random(rng, h as f32, w as f32);
            let color = hsv_to_rgb(
                rng.random_range(0.0..1.0),
                rng.random_range(0.55..1.0),
                rng.random_range(0.55..1.0),
            );
            let shade = (rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004));
            (shape, color, shade)
        })
        .collect();

    let mut mask = BinaryMask::filled(h, w, false);
    let image = RgbImage::from_fn(h, w, |y, x| {
        let (yf, xf) = (y as f32, x as f32);
        let hit = shapes
            .iter()
            .rev()
            .find(|(s, _, _)| s.contains(yf, xf));
        let noise: [f32; 3] = std::array::from_fn(|_| rng.random_range(-0.04..0.04));
        let base = match hit {
            Some((_, color, (sy, sx))) => {
                mask.set(y, x, true);
                let shade = sy * (yf - h as f32 / 2.0) + sx * (xf - w as f32 / 2.0);
                color.map(|c| c + shade)
            }
            None => {
                let t = bg_texture.at(yf, xf);
                tint.map(|d| gray + d + t)
            }
        };
        std::array::from_fn(|i| (base[i] + noise[i]).clamp(0.0, 1.0))
    });
    (image, mask)
}

/// The sample at `index` of the synthetic stream for `seed`.
pub fn generate_sample(seed: u64, index: usize, size: (usize, usize)) -> Result<Sample> {
    let (h, w) = size;
    if h < 16 || w < 16 {
        return Err(Error::invalid(format!(
            "synthetic images must be at least 16x16, got {h}x{w}"
        )));
    }
    let mut rng = seeded_rng(seed, 1 + index as u64);
    for _ in 0..MAX_ATTEMPTS {
        let (image, mask) = draw(&mut rng, h, w);
        let frac = mask.count() as f32 / (h * w) as f32;
        if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&frac) {
            return Sample::new(
                format!("syn{index:05}"),
                image,
                mask,
                Provenance::Synthetic { seed, index },
            );
        }
    }
    Err(Error::invalid(format!(
        "could not draw a sample with foreground in [{MIN_FOREGROUND}, {MAX_FOREGROUND}]"
    )))
}

/// `n` samples, each fully determined by `(seed, index)`.
pub fn generate_synthetic(n: usize, size: (usize, usize), seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("synthetic dataset needs at least one sample"));
    }
    let samples = (0..n)
        .map(|i| generate_sample(seed, i, size))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(samples))
}
