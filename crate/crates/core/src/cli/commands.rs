use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;

use super::config::RunConfig;
use super::plot::risk_coverage_svg;
use crate::checkpoint::load_checkpoint;
use crate::data::{
    append_corrupted_test, generate_synthetic, load_with_manifest, save_dataset_png, split,
    Dataset, SplitName,
};
use crate::metrics::{aurc, dice, summarize, EvalRecord, FailureRule, MetricsSummary};
use crate::training::{eval_seed, train_to_dir};
use crate::uncertainty::{format_map, score_methods, Method};

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.csv")
    } else {
        data.to_path_buf()
    }
}

fn load_dataset(data: &Path) -> anyhow::Result<Dataset> {
    let manifest = manifest_path(data);
    if !manifest.exists() {
        bail!("dataset not found: {} does not exist", manifest.display());
    }
    Ok(load_with_manifest(&manifest, None)?)
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    if cfg.synth_count == 0 {
        bail!("synth_count must be at least 1");
    }
    create_dir(out)?;
    let size = (cfg.image_size, cfg.image_size);
    let ds = generate_synthetic(cfg.synth_count, size, cfg.seed)?;
    let mut ds = split(ds, cfg.split_ratios, cfg.seed)?;
    if let Some(kind) = cfg.corruption {
        ds = append_corrupted_test(ds, kind, cfg.severity, cfg.seed)?;
    }
    let manifest = save_dataset_png(&ds, out)?;
    cfg.write_resolved(out)?;
    eprintln!(
        "wrote {} samples ({} train / {} val / {} test) to {}",
        ds.len(),
        ds.splits.train.len(),
        ds.splits.val.len(),
        ds.splits.test.len(),
        manifest.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    let ds = load_dataset(data)?;
    create_dir(out)?;
    cfg.write_resolved(out)?;
    let (outcome, artifacts) = train_to_dir(&ds, &cfg.train, out, |e| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  val dice {:.4}",
            e.epoch, e.mean_loss, e.val_dice
        )
    })?;
    eprintln!(
        "best val dice {:.4} at epoch {}; wrote {} and {}",
        outcome.best_val_dice,
        outcome.best_epoch,
        artifacts.best_checkpoint.display(),
        artifacts.final_checkpoint.display()
    );
    Ok(())
}

/// One row of the per-image scores CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub image_id: String,
    pub method: String,
    pub u: f64,
    pub dice: f64,
    pub band_mean: Option<f64>,
    pub band_p95: Option<f64>,
    pub fallback: Option<bool>,
}

const SCORES_HEADER: [&str; 7] = [
    "image_id",
    "method",
    "u",
    "dice",
    "band_mean",
    "band_p95",
    "fallback_flag",
];

fn parse_methods(list: &str) -> anyhow::Result<Vec<Method>> {
    if list == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in list.split(',') {
        let m: Method = name.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out.sort();
    Ok(out)
}

pub fn uq(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: &Path,
    out: &Path,
    method: &str,
    split_name: &str,
    dump_maps: bool,
) -> anyhow::Result<()> {
    cfg.validate()?;
    let methods = parse_methods(method)?;
    if !checkpoint.exists() {
        bail!("checkpoint not found: {}", checkpoint.display());
    }
    let params = load_checkpoint(checkpoint)?;
    let ds = load_dataset(data)?;
    let which = SplitName::parse(split_name)?;
    let mut indices: Vec<usize> = ds.splits.get(which).to_vec();
    if indices.is_empty() {
        bail!("split {split_name} is empty");
    }
    indices.sort_by(|&a, &b| ds.samples[a].id.cmp(&ds.samples[b].id));
    create_dir(out)?;
    cfg.write_resolved(out)?;
    if dump_maps {
        create_dir(&out.join("maps"))?;
    }

    let results: Vec<(usize, anyhow::Result<Vec<ScoreRow>>)> = indices
        .par_iter()
        .map(|&i| {
            let sample = &ds.samples[i];
            let run = || -> anyhow::Result<Vec<ScoreRow>> {
                let scores = score_methods(
                    &params,
                    &sample.image,
                    eval_seed(cfg.seed, i),
                    &cfg.uq,
                    &methods,
                )?;
                let d = dice(&scores.prediction.mask, &sample.mask)?;
                let mut rows = Vec::with_capacity(methods.len());
                for r in &scores.reports {
                    if r.method == Method::Resilience && !(0.0..=1.0).contains(&r.u) {
                        bail!("resilience score {} outside [0, 1]", r.u);
                    }
                    if let (true, Some(map)) = (dump_maps, &r.map) {
                        let path = out.join("maps").join(format!("{}_{}.txt", sample.id, r.method));
                        fs::write(&path, format_map(map))
                            .with_context(|| format!("writing {}", path.display()))?;
                    }
                    rows.push(ScoreRow {
                        image_id: sample.id.clone(),
                        method: r.method.to_string(),
                        u: r.u,
                        dice: d,
                        band_mean: r.band.map(|b| b.mean),
                        band_p95: r.band.map(|b| b.p95),
                        fallback: r.band.map(|b| b.fallback),
                    });
                }
                Ok(rows)
            };
            (i, run())
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(v) => rows.extend(v),
            Err(e) => failures.push(format!("{}: {e:#}", ds.samples[i].id)),
        }
    }
    let path = out.join("scores.csv");
    write_scores(&path, &rows)?;
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed {f}");
        }
        bail!("{} of {} images failed to score", failures.len(), indices.len());
    }
    eprintln!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn write_scores(path: &Path, rows: &[ScoreRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(SCORES_HEADER)?;
    for r in rows {
        w.write_record([
            r.image_id.clone(),
            r.method.clone(),
            r.u.to_string(),
            r.dice.to_string(),
            na(r.band_mean),
            na(r.band_p95),
            r.fallback.map_or("NA".into(), |f| (f as u8).to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(v: &str) -> anyhow::Result<Option<f64>> {
    if v == "NA" || v.is_empty() {
        Ok(None)
    } else {
        Ok(Some(v.parse()?))
    }
}

/// Reads a scores CSV. Besides the `uq` output format, a minimal
/// `image_id,dice,u` file is accepted and treated as one method named `u`.
pub fn read_scores(path: &Path) -> anyhow::Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id, d, u) = match (col("image_id"), col("dice"), col("u")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => bail!("{}: needs image_id, dice and u columns", path.display()),
    };
    let method = col("method");
    let (bm, bp, fb) = (col("band_mean"), col("band_p95"), col("fallback_flag"));
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let ctx = || format!("{} row {}", path.display(), n + 2);
        let opt = |c: Option<usize>| -> anyhow::Result<Option<f64>> {
            c.map_or(Ok(None), |i| parse_opt(field(i)))
        };
        rows.push(ScoreRow {
            image_id: field(id).to_string(),
            method: method.map_or("u".to_string(), |i| field(i).to_string()),
            u: field(u).parse().with_context(ctx)?,
            dice: field(d).parse().with_context(ctx)?,
            band_mean: opt(bm).with_context(ctx)?,
            band_p95: opt(bp).with_context(ctx)?,
            fallback: fb.and_then(|i| match field(i) {
                "1" => Some(true),
                "0" => Some(false),
                _ => None,
            }),
        });
    }
    Ok(rows)
}

fn method_order(name: &str) -> (usize, String) {
    let rank = name
        .parse::<Method>()
        .map_or(Method::ALL.len(), |m| m as usize);
    (rank, name.to_string())
}

fn group_records(rows: &[ScoreRow]) -> Vec<(String, Vec<EvalRecord>)> {
    let mut groups: BTreeMap<(usize, String), Vec<EvalRecord>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(method_order(&r.method))
            .or_default()
            .push(EvalRecord::new(r.image_id.clone(), r.dice, r.u));
    }
    groups.into_iter().map(|((_, m), v)| (m, v)).collect()
}

const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "delta_dice_at_90",
    "aurc",
    "auroc",
    "auprc",
    "failure_threshold",
    "n_images",
    "n_failures",
];

const METRICS: [&str; 4] = ["delta_dice_at_90", "aurc", "auroc", "auprc"];

fn metric_values(s: &MetricsSummary) -> [Option<f64>; 4] {
    [Some(s.delta_dice), Some(s.aurc), s.auroc, s.auprc]
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

fn eval_run(
    cfg: &RunConfig,
    rows: &[ScoreRow],
    dir: &Path,
) -> anyhow::Result<Vec<(String, MetricsSummary)>> {
    create_dir(dir)?;
    let rule = FailureRule {
        threshold: cfg.failure_dice_threshold,
    };
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    for (method, records) in group_records(rows) {
        let s = summarize(&records, rule, cfg.coverage)
            .with_context(|| format!("method {method}"))?;
        w.write_record([
            method.clone(),
            s.delta_dice.to_string(),
            s.aurc.to_string(),
            na(s.auroc),
            na(s.auprc),
            s.failure_threshold.to_string(),
            s.n_images.to_string(),
            s.n_failures.to_string(),
        ])?;
        let (_, curve) = aurc(&records)?;
        let mut cw = csv::Writer::from_path(dir.join(format!("risk_coverage_{method}.csv")))?;
        cw.write_record(["coverage", "risk"])?;
        for &(c, r) in &curve.points {
            cw.write_record([c.to_string(), r.to_string()])?;
        }
        cw.flush()?;
        curves.push((method.clone(), curve));
        summaries.push((method, s));
    }
    w.flush()?;
    fs::write(dir.join("risk_coverage.svg"), risk_coverage_svg(&curves))?;
    Ok(summaries)
}

pub fn eval(cfg: &RunConfig, scores: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    create_dir(out)?;
    cfg.write_resolved(out)?;
    let mut runs = Vec::new();
    for (k, path) in scores.iter().enumerate() {
        let rows = read_scores(path)?;
        if rows.is_empty() {
            bail!("{} has no score rows", path.display());
        }
        let dir = if scores.len() == 1 {
            out.to_path_buf()
        } else {
            out.join(format!("run_{}", k + 1))
        };
        runs.push(eval_run(cfg, &rows, &dir)?);
    }
    // mean ± sample std across runs for every method present in any run
    let mut by_method: BTreeMap<(usize, String), [Vec<f64>; 4]> = BTreeMap::new();
    for run in &runs {
        for (m, s) in run {
            let entry = by_method.entry(method_order(m)).or_default();
            for (slot, v) in entry.iter_mut().zip(metric_values(s)) {
                slot.extend(v);
            }
        }
    }
    let mut w = csv::Writer::from_path(out.join("summary_mean_std.csv"))?;
    w.write_record(["method", "metric", "mean", "std", "n_runs"])?;
    for ((_, m), values) in &by_method {
        for (name, v) in METRICS.iter().zip(values) {
            let ms = mean_std(v);
            w.write_record([
                m.clone(),
                name.to_string(),
                na(ms.map(|x| x.0)),
                na(ms.map(|x| x.1)),
                v.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    eprintln!("wrote evaluation of {} run(s) to {}", runs.len(), out.display());
    Ok(())
}

/// One row of an eval `summary.csv`.
fn read_summary(path: &Path) -> anyhow::Result<Vec<(String, [Option<f64>; 4])>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    if r.headers()?.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        bail!("{} is not an eval summary.csv", path.display());
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut vals = [None; 4];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = parse_opt(&rec[j + 1])?;
        }
        out.push((rec[0].to_string(), vals));
    }
    Ok(out)
}

pub fn report(cfg: &RunConfig, summaries: &[String], out: &Path) -> anyhow::Result<()> {
    create_dir(out)?;
    cfg.write_resolved(out)?;
    let mut table: BTreeMap<(String, (usize, String)), [Vec<f64>; 4]> = BTreeMap::new();
    for item in summaries {
        let (dataset, path) = match item.split_once('=') {
            Some((d, p)) => (d.to_string(), PathBuf::from(p)),
            None => (cfg.dataset_name.clone(), PathBuf::from(item)),
        };
        for (method, vals) in read_summary(&path)? {
            let entry = table.entry((dataset.clone(), method_order(&method))).or_default();
            for (slot, v) in entry.iter_mut().zip(vals) {
                slot.extend(v);
            }
        }
    }
    if table.is_empty() {
        return Err(anyhow!("no summary rows to report"));
    }
    let mut header = vec!["dataset".to_string(), "method".to_string(), "n_runs".to_string()];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    let mut w = csv::Writer::from_path(out.join("report.csv"))?;
    w.write_record(&header)?;
    let mut text = format!(
        "{:<12} {:<11} {:>6} {:>20} {:>20} {:>20} {:>20}\n",
        "dataset", "method", "runs", "dDice@90", "AURC", "AUROC", "AUPRC"
    );
    for ((dataset, (_, method)), values) in &table {
        let n_runs = values.iter().map(Vec::len).max().unwrap_or(0);
        let mut record = vec![dataset.clone(), method.clone(), n_runs.to_string()];
        let mut cells = Vec::new();
        for v in values {
            let ms = mean_std(v);
            record.push(na(ms.map(|x| x.0)));
            record.push(na(ms.map(|x| x.1)));
            cells.push(ms.map_or("NA".to_string(), |(m, s)| format!("{m:.4} ± {s:.4}")));
        }
        w.write_record(&record)?;
        text.push_str(&format!(
            "{:<12} {:<11} {:>6} {:>20} {:>20} {:>20} {:>20}\n",
            dataset, method, n_runs, cells[0], cells[1], cells[2], cells[3]
        ));
    }
    w.flush()?;
    fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
