//! Samples, datasets and deterministic splitting.

mod corrupt;
mod manifest;
mod png_io;
mod synthetic;

use rand::seq::SliceRandom;

pub use corrupt::{corrupt, rotate_sample, Corruption, CorruptionKind};
pub use manifest::{read_manifest, write_manifest, ManifestRow};
pub use png_io::{load_png_pairs, load_with_manifest, save_dataset_png, save_png_pairs};
pub use synthetic::{generate_sample, generate_synthetic, DEFAULT_SIZE};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, RgbImage};
use crate::nca::seeded_rng;

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic { seed: u64, index: usize },
    File { image: std::path::PathBuf, mask: std::path::PathBuf },
}

/// An RGB image with its binary ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub provenance: Provenance,
    pub corruption: Option<Corruption>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: RgbImage, mask: BinaryMask, provenance: Provenance) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(Error::shape(
                "Sample::new",
                format!("image {:?} vs mask {:?}", image.dims(), mask.dims()),
            ));
        }
        Ok(Self {
            id: id.into(),
            image,
            mask,
            provenance,
            corruption: None,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// Disjoint index sets into [`Dataset::samples`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, name: SplitName) -> &mut Vec<usize> {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::Val => &mut self.val,
            SplitName::Test => &mut self.test,
        }
    }

    /// Which split an index belongs to.
    pub fn split_of(&self, index: usize) -> Option<SplitName> {
        [SplitName::Train, SplitName::Val, SplitName::Test]
            .into_iter()
            .find(|&s| self.get(s).contains(&index))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub splits: Splits,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self {
            samples,
            splits: Splits::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split_samples(&self, name: SplitName) -> impl Iterator<Item = &Sample> {
        self.splits.get(name).iter().map(|&i| &self.samples[i])
    }
}

/// Shuffles indices with `seed`, then cuts contiguous val/test blocks of
/// `floor(n * ratio)` each; the remainder goes to train.
pub fn split(mut dataset: Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (tr, va, te) = ratios;
    if tr <= 0.0 || va <= 0.0 || te <= 0.0 || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, 0));
    let n_val = (n as f64 * va + 1e-9).floor() as usize;
    let n_test = (n as f64 * te + 1e-9).floor() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::invalid(format!(
            "split of {n} samples leaves an empty split ({n_train}/{n_val}/{n_test})"
        )));
    }
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    dataset.splits = Splits { train, val, test };
    Ok(dataset)
}

/// Appends to the test split a corrupted copy of every clean test sample,
/// tagged `<id>_<kind><severity>`. With `kind = None` the kinds cycle in
/// [`CorruptionKind::ALL`] order over the test samples.
pub fn append_corrupted_test(
    mut dataset: Dataset,
    kind: Option<CorruptionKind>,
    severity: u8,
    seed: u64,
) -> Result<Dataset> {
    let clean: Vec<usize> = dataset
        .splits
        .test
        .iter()
        .copied()
        .filter(|&i| dataset.samples[i].corruption.is_none())
        .collect();
    for (j, &i) in clean.iter().enumerate() {
        let k = kind.unwrap_or(CorruptionKind::ALL[j % CorruptionKind::ALL.len()]);
        let source = &dataset.samples[i];
        let mut c = corrupt(source, k, severity, crate::training::eval_seed(seed, i))?;
        c.id = format!("{}_{}{}", source.id, k.as_str(), severity);
        dataset.samples.push(c);
        dataset.splits.test.push(dataset.samples.len() - 1);
    }
    Ok(dataset)
}
