//! Command-line pipeline: `synth` → `train` → `uq` → `eval` → `report`.
//!
//! Every command writes `resolved_config.txt` next to its outputs, and all
//! CSV outputs are byte-reproducible for a fixed configuration and seed.

mod commands;
mod config;
mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{read_scores, ScoreRow};
pub use config::RunConfig;
pub use plot::risk_coverage_svg;

#[derive(Debug, Parser)]
#[command(name = "nca-resilience", version, about = "NCA segmentation with perturb-and-recover uncertainty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub rollout_steps: Option<usize>,
    #[arg(long, global = true)]
    pub failure_dice_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub coverage: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset as PNG pairs plus a manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Number of clean samples.
        #[arg(long)]
        count: Option<usize>,
        /// Add corrupted test copies: a corruption kind or `mixed`.
        #[arg(long)]
        corruption: Option<String>,
        #[arg(long)]
        severity: Option<u8>,
    },
    /// Train an NCA on a manifest dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory holding `manifest.csv`, or the manifest itself.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score images with one or all uncertainty methods.
    Uq {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// resilience, single, stoptime, stability, flicker, tta or all.
        #[arg(long, default_value = "all")]
        method: String,
        /// Which split to score.
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write per-pixel maps under `maps/`.
        #[arg(long)]
        dump_maps: bool,
    },
    /// Selective-prediction and failure-detection metrics from score CSVs.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Scores CSV; repeat for several runs.
        #[arg(long, required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean ± std table across eval summaries, joined by dataset and method.
    Report {
        #[command(flatten)]
        common: Common,
        /// `DATASET=PATH` to a `summary.csv`; repeat per run.
        #[arg(long, required = true)]
        summary: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Builds the effective configuration: defaults, file, overrides, flags.
pub fn resolve_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(n) = common.rollout_steps {
        cfg.uq.rollout_steps = n;
    }
    if let Some(t) = common.failure_dice_threshold {
        cfg.failure_dice_threshold = t;
    }
    if let Some(c) = common.coverage {
        cfg.coverage = c;
    }
    Ok(cfg)
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            common,
            out,
            count,
            corruption,
            severity,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(n) = count {
                cfg.synth_count = n;
            }
            if let Some(c) = corruption {
                cfg.set("corruption", &c)?;
            }
            if let Some(s) = severity {
                cfg.severity = s;
            }
            commands::synth(&cfg, &out)
        }
        Command::Train {
            common,
            data,
            out,
            epochs,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            commands::train(&cfg, &data, &out)
        }
        Command::Uq {
            common,
            data,
            checkpoint,
            out,
            method,
            split,
            dump_maps,
        } => {
            let cfg = resolve_config(&common)?;
            commands::uq(&cfg, &data, &checkpoint, &out, &method, &split, dump_maps)
        }
        Command::Eval {
            common,
            scores,
            out,
        } => commands::eval(&resolve_config(&common)?, &scores, &out),
        Command::Report {
            common,
            summary,
            out,
        } => commands::report(&resolve_config(&common)?, &summary, &out),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    execute(Cli::try_parse_from(args)?)
}
