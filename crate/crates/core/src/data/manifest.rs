use std::path::Path;

use super::SplitName;
use crate::error::{Error, Result};

/// One line of `manifest.csv`: `id,image_path,mask_path,split,corruption_kind,severity`.
///
/// Paths are relative to the manifest's directory. Clean samples carry an
/// empty corruption kind and severity 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
    pub split: SplitName,
    pub corruption_kind: String,
    pub severity: u8,
}

pub const MANIFEST_HEADER: [&str; 6] = [
    "id",
    "image_path",
    "mask_path",
    "split",
    "corruption_kind",
    "severity",
];

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        w.write_record([
            r.id.as_str(),
            &r.image_path,
            &r.mask_path,
            r.split.as_str(),
            &r.corruption_kind,
            &r.severity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::file(path, format!("cannot open manifest: {e}")))?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::file(
            path,
            format!("unexpected manifest header {:?}", headers),
        ));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::file(path, format!("row {}: bad {what}", line + 2));
        rows.push(ManifestRow {
            id: rec[0].to_string(),
            image_path: rec[1].to_string(),
            mask_path: rec[2].to_string(),
            split: SplitName::parse(&rec[3]).map_err(|_| bad("split"))?,
            corruption_kind: rec[4].to_string(),
            severity: rec[5].parse().map_err(|_| bad("severity"))?,
        });
    }
    Ok(rows)
}
