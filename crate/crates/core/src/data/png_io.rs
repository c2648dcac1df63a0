//! 8-bit PNG ingestion and export of image/mask pairs.

use std::fs;
use std::path::{Path, PathBuf};

use super::{
    read_manifest, write_manifest, Corruption, Dataset, ManifestRow, Provenance, Sample, Splits,
};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RgbImage};

/// Mask pixels with any channel above this value are foreground.
pub const MASK_THRESHOLD: u8 = 127;

fn read_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)
        .map_err(|e| Error::file(path, format!("unreadable image: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    RgbImage::new(h as usize, w as usize, data)
}

fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path)
        .map_err(|e| Error::file(path, format!("unreadable mask: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .as_raw()
        .chunks_exact(3)
        .map(|px| px.iter().any(|&v| v > MASK_THRESHOLD))
        .collect();
    BinaryMask::new(h as usize, w as usize, data)
}

fn write_image(path: &Path, image: &RgbImage) -> Result<()> {
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, bytes)
        .expect("buffer sized from image");
    buf.save(path)
        .map_err(|e| Error::file(path, format!("cannot write PNG: {e}")))
}

fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer sized from mask");
    buf.save(path)
        .map_err(|e| Error::file(path, format!("cannot write PNG: {e}")))
}

/// Center-crops or zero-pads each axis independently to `(h, w)`.
fn fit<T: Clone>(src: &[T], (sh, sw): (usize, usize), (h, w): (usize, usize), per: usize, fill: T) -> Vec<T> {
    let mut out = vec![fill; h * w * per];
    let off = |s: usize, t: usize| -> (isize, usize) {
        // (source offset, copy length)
        (s as isize - t as isize, s.min(t))
    };
    let (dy, ny) = off(sh, h);
    let (dx, nx) = off(sw, w);
    let (sy0, ty0) = if dy >= 0 { (dy as usize / 2, 0) } else { (0, (-dy) as usize / 2) };
    let (sx0, tx0) = if dx >= 0 { (dx as usize / 2, 0) } else { (0, (-dx) as usize / 2) };
    for y in 0..ny {
        let s = ((sy0 + y) * sw + sx0) * per;
        let t = ((ty0 + y) * w + tx0) * per;
        out[t..t + nx * per].clone_from_slice(&src[s..s + nx * per]);
    }
    out
}

fn load_pair(image_path: &Path, mask_path: &Path, resize_to: Option<(usize, usize)>) -> Result<(RgbImage, BinaryMask)> {
    let image = read_image(image_path)?;
    let mask = read_mask(mask_path)?;
    if image.dims() != mask.dims() {
        return Err(Error::file(
            mask_path,
            format!(
                "mask is {:?} but image {} is {:?}",
                mask.dims(),
                image_path.display(),
                image.dims()
            ),
        ));
    }
    match resize_to {
        Some(target) if target != image.dims() => {
            let img = fit(image.data(), image.dims(), target, 3, 0.0);
            let m = fit(mask.data(), mask.dims(), target, 1, false);
            Ok((
                RgbImage::new(target.0, target.1, img)?,
                BinaryMask::new(target.0, target.1, m)?,
            ))
        }
        _ => Ok((image, mask)),
    }
}

/// Loads every `*.png` in `image_dir` with the same-named file in `mask_dir`,
/// in lexicographic filename order. The result has no splits assigned.
pub fn load_png_pairs(
    image_dir: &Path,
    mask_dir: &Path,
    resize_to: Option<(usize, usize)>,
) -> Result<Dataset> {
    let read_dir = fs::read_dir(image_dir)
        .map_err(|e| Error::file(image_dir, format!("cannot list directory: {e}")))?;
    let mut names: Vec<String> = read_dir
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::file(image_dir, "no PNG images found"));
    }
    let mut samples = Vec::with_capacity(names.len());
    for name in names {
        let image_path = image_dir.join(&name);
        let mask_path = mask_dir.join(&name);
        if !mask_path.is_file() {
            return Err(Error::file(&image_path, "no matching mask"));
        }
        let (image, mask) = load_pair(&image_path, &mask_path, resize_to)?;
        let id = Path::new(&name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(name.clone());
        samples.push(Sample::new(
            id,
            image,
            mask,
            Provenance::File {
                image: image_path,
                mask: mask_path,
            },
        )?);
    }
    Ok(Dataset::new(samples))
}

/// Writes `images/<id>.png` and `masks/<id>.png` under `dir` for each sample.
pub fn save_png_pairs(samples: &[Sample], dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let images = dir.join("images");
    let masks = dir.join("masks");
    fs::create_dir_all(&images).map_err(|e| Error::file(&images, e.to_string()))?;
    fs::create_dir_all(&masks).map_err(|e| Error::file(&masks, e.to_string()))?;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let rel_img = PathBuf::from("images").join(format!("{}.png", s.id));
        let rel_mask = PathBuf::from("masks").join(format!("{}.png", s.id));
        write_image(&dir.join(&rel_img), &s.image)?;
        write_mask(&dir.join(&rel_mask), &s.mask)?;
        out.push((rel_img, rel_mask));
    }
    Ok(out)
}

/// Writes all samples as PNG pairs plus `manifest.csv` recording splits and
/// corruption tags. Samples outside every split are an error.
pub fn save_dataset_png(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let paths = save_png_pairs(&dataset.samples, dir)?;
    let mut rows = Vec::with_capacity(dataset.len());
    for (i, (s, (img, mask))) in dataset.samples.iter().zip(paths).enumerate() {
        let split = dataset
            .splits
            .split_of(i)
            .ok_or_else(|| Error::invalid(format!("sample {} has no split", s.id)))?;
        rows.push(ManifestRow {
            id: s.id.clone(),
            image_path: img.to_string_lossy().replace('\\', "/"),
            mask_path: mask.to_string_lossy().replace('\\', "/"),
            split,
            corruption_kind: s
                .corruption
                .map(|c| c.kind.as_str().to_string())
                .unwrap_or_default(),
            severity: s.corruption.map(|c| c.severity).unwrap_or(0),
        });
    }
    let path = dir.join("manifest.csv");
    write_manifest(&path, &rows)?;
    Ok(path)
}

/// Loads a dataset written by [`save_dataset_png`] (or any manifest with the
/// same columns), restoring splits and corruption tags.
pub fn load_with_manifest(manifest: &Path, resize_to: Option<(usize, usize)>) -> Result<Dataset> {
    let rows = read_manifest(manifest)?;
    if rows.is_empty() {
        return Err(Error::file(manifest, "manifest lists no samples"));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(rows.len());
    let mut splits = Splits::default();
    for (i, row) in rows.iter().enumerate() {
        let image_path = base.join(&row.image_path);
        let mask_path = base.join(&row.mask_path);
        let (image, mask) = load_pair(&image_path, &mask_path, resize_to)?;
        let mut s = Sample::new(
            row.id.clone(),
            image,
            mask,
            Provenance::File {
                image: image_path,
                mask: mask_path,
            },
        )?;
        if !row.corruption_kind.is_empty() && row.severity > 0 {
            s.corruption = Some(Corruption {
                kind: row.corruption_kind.parse()?,
                severity: row.severity,
            });
        }
        samples.push(s);
        splits.get_mut(row.split).push(i);
    }
    Ok(Dataset { samples, splits })
}
