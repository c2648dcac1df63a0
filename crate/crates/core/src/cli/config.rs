//! Flat `key = value` run configuration.
//!
//! Defaults are overridden by a config file, which is overridden by
//! `--set key=value` pairs and then by the dedicated command-line flags.
//! Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::CorruptionKind;
use crate::error::{Error, Result};
use crate::metrics::FailureRule;
use crate::training::TrainConfig;
use crate::uncertainty::{Dihedral, UncertaintyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub train: TrainConfig,
    pub uq: UncertaintyConfig,
    pub failure_dice_threshold: f64,
    pub coverage: f64,
    pub synth_count: usize,
    pub image_size: usize,
    pub split_ratios: (f64, f64, f64),
    /// `None` disables corrupted test copies; `Some(None)` cycles all kinds.
    pub corruption: Option<Option<CorruptionKind>>,
    pub severity: u8,
    pub dataset_name: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train: TrainConfig::default(),
            uq: UncertaintyConfig::default(),
            failure_dice_threshold: FailureRule::default().threshold,
            coverage: 0.9,
            synth_count: 300,
            image_size: 64,
            split_ratios: (0.7, 0.15, 0.15),
            corruption: None,
            severity: 4,
            dataset_name: "synthetic".into(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {value:?}")))
}

fn parse_option<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn dihedral_from_name(name: &str) -> Result<Dihedral> {
    Dihedral::ALL
        .into_iter()
        .find(|d| d.name() == name)
        .ok_or_else(|| Error::invalid(format!("unknown transform {name:?}")))
}

impl RunConfig {
    /// Applies one `key = value` setting. The seed also seeds training.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            "num_channels" => self.train.hyper.num_channels = parse(key, v)?,
            "hidden_size" => self.train.hyper.hidden_size = parse(key, v)?,
            "fire_rate" => self.train.hyper.fire_rate = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "t_min" => {
                self.train.t_min = parse(key, v)?;
                self.uq.t_min = self.train.t_min;
            }
            "t_max" => {
                self.train.t_max = parse(key, v)?;
                self.uq.t_max = self.train.t_max;
            }
            "grad_clip" => self.train.grad_clip = parse_option(key, v)?,
            "target_val_dice" => self.train.target_val_dice = parse_option(key, v)?,
            "sigma" => self.uq.sigma = parse(key, v)?,
            "relax_steps" => self.uq.relax_steps = parse(key, v)?,
            "window" => self.uq.window = parse(key, v)?,
            "stoptime_samples" => self.uq.stoptime_samples = parse(key, v)?,
            "rollout_steps" => self.uq.rollout_steps = parse(key, v)?,
            "band_radius" => self.uq.band_radius = parse(key, v)?,
            "threshold" => self.uq.threshold = parse(key, v)?,
            "tta_transforms" => {
                self.uq.tta_transforms = v
                    .split(',')
                    .map(|t| dihedral_from_name(t.trim()))
                    .collect::<Result<_>>()?
            }
            "failure_dice_threshold" => self.failure_dice_threshold = parse(key, v)?,
            "coverage" => self.coverage = parse(key, v)?,
            "synth_count" => self.synth_count = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "train_ratio" => self.split_ratios.0 = parse(key, v)?,
            "val_ratio" => self.split_ratios.1 = parse(key, v)?,
            "test_ratio" => self.split_ratios.2 = parse(key, v)?,
            "corruption" => {
                self.corruption = match v {
                    "none" => None,
                    "mixed" => Some(None),
                    kind => Some(Some(parse(key, kind)?)),
                }
            }
            "severity" => self.severity = parse(key, v)?,
            "dataset_name" => self.dataset_name = v.to_string(),
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every setting of a config file's text.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected `key = value`", n + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::invalid(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e.to_string()))?;
        self.apply_text(&text).map_err(|e| Error::file(path, e.to_string()))
    }

    /// The fully resolved configuration in the file format, one key per line.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f32>| v.map_or("none".to_string(), |x| x.to_string());
        let t = &self.train;
        let u = &self.uq;
        let transforms: Vec<&str> = u.tta_transforms.iter().map(|d| d.name()).collect();
        let corruption = match self.corruption {
            None => "none".to_string(),
            Some(None) => "mixed".to_string(),
            Some(Some(k)) => k.as_str().to_string(),
        };
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("num_channels", t.hyper.num_channels.to_string()),
            ("hidden_size", t.hyper.hidden_size.to_string()),
            ("fire_rate", t.hyper.fire_rate.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("t_min", t.t_min.to_string()),
            ("t_max", t.t_max.to_string()),
            ("grad_clip", opt(t.grad_clip)),
            ("target_val_dice", opt(t.target_val_dice)),
            ("sigma", u.sigma.to_string()),
            ("relax_steps", u.relax_steps.to_string()),
            ("window", u.window.to_string()),
            ("stoptime_samples", u.stoptime_samples.to_string()),
            ("rollout_steps", u.rollout_steps.to_string()),
            ("band_radius", u.band_radius.to_string()),
            ("threshold", u.threshold.to_string()),
            ("tta_transforms", transforms.join(",")),
            ("failure_dice_threshold", self.failure_dice_threshold.to_string()),
            ("coverage", self.coverage.to_string()),
            ("synth_count", self.synth_count.to_string()),
            ("image_size", self.image_size.to_string()),
            ("train_ratio", self.split_ratios.0.to_string()),
            ("val_ratio", self.split_ratios.1.to_string()),
            ("test_ratio", self.split_ratios.2.to_string()),
            ("corruption", corruption),
            ("severity", self.severity.to_string()),
            ("dataset_name", self.dataset_name.clone()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Writes `resolved_config.txt` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join("resolved_config.txt");
        fs::write(&path, self.to_text()).map_err(|e| Error::file(&path, e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.uq.validate()?;
        if !(0.0..=1.0).contains(&self.failure_dice_threshold) {
            return Err(Error::invalid("failure_dice_threshold must lie in [0, 1]"));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::invalid("coverage must lie in (0, 1]"));
        }
        Ok(())
    }
}
