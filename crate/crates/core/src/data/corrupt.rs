//! Photometric and geometric corruptions for shifted test sets.
//!
//! Severity runs 1..=5 and indexes the fixed tables below; severity 0 is the
//! identity.
//!
//! | kind            | parameter                        | 1    | 2    | 3    | 4    | 5    |
//! |-----------------|----------------------------------|------|------|------|------|------|
//! | gaussian_noise  | noise std                        | 0.02 | 0.05 | 0.08 | 0.12 | 0.18 |
//! | blur            | Gaussian std (pixels)            | 0.5  | 1.0  | 1.5  | 2.0  | 3.0  |
//! | brightness      | additive shift, random sign      | 0.1  | 0.2  | 0.3  | 0.4  | 0.5  |
//! | contrast        | factor towards the image mean    | 0.75 | 0.6  | 0.45 | 0.3  | 0.15 |
//! | rotation        | degrees, random sign             | 10   | 20   | 30   | 45   | 60   |
//! | scale           | zoom factor, random in/out       | 1.1  | 1.25 | 1.4  | 1.6  | 1.8  |
//! | occlusion       | square side / min(H, W)          | 0.1  | 0.15 | 0.2  | 0.3  | 0.4  |

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Sample;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RgbImage};
use crate::nca::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptionKind {
    GaussianNoise,
    Blur,
    Brightness,
    Contrast,
    Rotation,
    Scale,
    Occlusion,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 7] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::Blur,
        CorruptionKind::Brightness,
        CorruptionKind::Contrast,
        CorruptionKind::Rotation,
        CorruptionKind::Scale,
        CorruptionKind::Occlusion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::Blur => "blur",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Rotation => "rotation",
            CorruptionKind::Scale => "scale",
            CorruptionKind::Occlusion => "occlusion",
        }
    }

    pub fn is_geometric(self) -> bool {
        matches!(self, CorruptionKind::Rotation | CorruptionKind::Scale)
    }

    fn table(self) -> [f32; 5] {
        match self {
            CorruptionKind::GaussianNoise => [0.02, 0.05, 0.08, 0.12, 0.18],
            CorruptionKind::Blur => [0.5, 1.0, 1.5, 2.0, 3.0],
            CorruptionKind::Brightness => [0.1, 0.2, 0.3, 0.4, 0.5],
            CorruptionKind::Contrast => [0.75, 0.6, 0.45, 0.3, 0.15],
            CorruptionKind::Rotation => [10.0, 20.0, 30.0, 45.0, 60.0],
            CorruptionKind::Scale => [1.1, 1.25, 1.4, 1.6, 1.8],
            CorruptionKind::Occlusion => [0.1, 0.15, 0.2, 0.3, 0.4],
        }
    }

    /// Table parameter for `severity` in `1..=5`.
    pub fn parameter(self, severity: u8) -> Option<f32> {
        (1..=5)
            .contains(&severity)
            .then(|| self.table()[severity as usize - 1])
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown corruption kind {s:?}")))
    }
}

/// Tag recorded on a corrupted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub severity: u8,
}

/// Applies `kind` at `severity`; the result is a deterministic function of
/// `(sample, kind, severity, seed)`.
pub fn corrupt(sample: &Sample, kind: CorruptionKind, severity: u8, seed: u64) -> Result<Sample> {
    if severity == 0 {
        return Ok(sample.clone());
    }
    let param = kind
        .parameter(severity)
        .ok_or_else(|| Error::invalid(format!("severity must be in 0..=5, got {severity}")))?;
    let mut rng = seeded_rng(seed, 0);
    let mut out = sample.clone();
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    match kind {
        CorruptionKind::GaussianNoise => {
            let normal = Normal::new(0.0f32, param).expect("positive std");
            for v in out.image.data_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        CorruptionKind::Blur => out.image = gaussian_blur(&sample.image, param),
        CorruptionKind::Brightness => {
            for v in out.image.data_mut() {
                *v += sign * param;
            }
        }
        CorruptionKind::Contrast => {
            let mean = sample.image.data().iter().sum::<f32>() / sample.image.data().len() as f32;
            for v in out.image.data_mut() {
                *v = mean + param * (*v - mean);
            }
        }
        CorruptionKind::Rotation => {
            out = rotate_sample(sample, sign * param);
        }
        CorruptionKind::Scale => {
            let zoom = if sign > 0.0 { param } else { 1.0 / param };
            let (h, w) = sample.dims();
            let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
            let (image, mask) = warp(sample, |y, x| (cy + (y - cy) / zoom, cx + (x - cx) / zoom));
            out.image = image;
            out.mask = mask;
        }
        CorruptionKind::Occlusion => {
            let (h, w) = sample.dims();
            let side = ((h.min(w) as f32 * param).round() as usize).max(1);
            let y0 = rng.random_range(0..=h - side);
            let x0 = rng.random_range(0..=w - side);
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    out.image.set_pixel(y, x, [0.0; 3]);
                }
            }
        }
    }
    for v in out.image.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    out.corruption = Some(Corruption { kind, severity });
    Ok(out)
}

fn gaussian_blur(image: &RgbImage, sigma: f32) -> RgbImage {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f32> = (-radius..=radius)
        .map(|d| (-(d * d) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = weights.iter().sum();
    let weights: Vec<f32> = weights.iter().map(|w| w / total).collect();
    let (h, w) = image.dims();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let horizontal = RgbImage::from_fn(h, w, |y, x| {
        let mut acc = [0.0f32; 3];
        for (k, wt) in weights.iter().enumerate() {
            let px = image.pixel(y, clamp(x as isize + k as isize - radius, w));
            for c in 0..3 {
                acc[c] += wt * px[c];
            }
        }
        acc
    });
    RgbImage::from_fn(h, w, |y, x| {
        let mut acc = [0.0f32; 3];
        for (k, wt) in weights.iter().enumerate() {
            let px = horizontal.pixel(clamp(y as isize + k as isize - radius, h), x);
            for c in 0..3 {
                acc[c] += wt * px[c];
            }
        }
        acc
    })
}

/// Inverse-maps every output pixel through `source`; bilinear for the image,
/// nearest for the mask, black/background outside.
fn warp(sample: &Sample, source: impl Fn(f32, f32) -> (f32, f32)) -> (RgbImage, BinaryMask) {
    let (h, w) = sample.dims();
    let mut mask = BinaryMask::filled(h, w, false);
    let image = RgbImage::from_fn(h, w, |y, x| {
        let (sy, sx) = source(y as f32, x as f32);
        let (ny, nx) = (sy.round(), sx.round());
        if ny >= 0.0 && nx >= 0.0 && (ny as usize) < h && (nx as usize) < w {
            mask.set(y, x, *sample.mask.get(ny as usize, nx as usize));
        }
        bilinear(&sample.image, sy, sx)
    });
    (image, mask)
}

fn bilinear(image: &RgbImage, y: f32, x: f32) -> [f32; 3] {
    let (h, w) = image.dims();
    if y < -0.5 || x < -0.5 || y > h as f32 - 0.5 || x > w as f32 - 0.5 {
        return [0.0; 3];
    }
    let y = y.clamp(0.0, (h - 1) as f32);
    let x = x.clamp(0.0, (w - 1) as f32);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f32, x - x0 as f32);
    let (a, b, c, d) = (
        image.pixel(y0, x0),
        image.pixel(y0, x1),
        image.pixel(y1, x0),
        image.pixel(y1, x1),
    );
    std::array::from_fn(|i| {
        (1.0 - fy) * ((1.0 - fx) * a[i] + fx * b[i]) + fy * ((1.0 - fx) * c[i] + fx * d[i])
    })
}

/// Rotates image and mask about the center by `degrees` (counter-clockwise).
///
/// Multiples of 180° (and of 90° on square images) are exact pixel
/// permutations; other angles resample.
pub fn rotate_sample(sample: &Sample, degrees: f32) -> Sample {
    let (h, w) = sample.dims();
    let quarter = degrees / 90.0;
    let mut out = sample.clone();
    if quarter.fract() == 0.0 {
        let q = (quarter as i64).rem_euclid(4);
        if q % 2 == 0 || h == w {
            let src = |y: usize, x: usize| match q {
                0 => (y, x),
                1 => (h - 1 - x, y),
                2 => (h - 1 - y, w - 1 - x),
                _ => (x, w - 1 - y),
            };
            out.image = RgbImage::from_fn(h, w, |y, x| {
                let (sy, sx) = src(y, x);
                sample.image.pixel(sy, sx)
            });
            out.mask = BinaryMask::from_fn(h, w, |y, x| {
                let (sy, sx) = src(y, x);
                *sample.mask.get(sy, sx)
            });
            return out;
        }
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let (image, mask) = warp(sample, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    });
    out.image = image;
    out.mask = mask;
    out
}
