//! Backpropagation through the unrolled rollout with AdamW.
//!
//! Each batch samples one rollout length `T ~ U{t_min..=t_max}`, runs every
//! image for `T` steps on a recording graph, and minimizes the mean
//! per-pixel cross-entropy of the final readout. Fire masks are drawn
//! during the forward pass and treated as constants by the backward pass.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::Graph;
use crate::checkpoint::save_checkpoint;
use crate::data::{Dataset, Sample, SplitName};
use crate::error::{Error, Result};
use crate::metrics::dice;
use crate::nca::{
    fire_mask, init_state, predict, seeded_rng, step_recorded, NcaHyper, NcaParams, ParamVars,
    SeededRng,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hyper: NcaHyper,
    pub learning_rate: f32,
    pub weight_decay: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub seed: u64,
    /// Optional global gradient-norm clip; off by default.
    pub grad_clip: Option<f32>,
    /// Stop after the first epoch whose validation Dice reaches this value.
    pub target_val_dice: Option<f32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hyper: NcaHyper::default(),
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            epochs: 50,
            batch_size: 2,
            t_min: 32,
            t_max: 64,
            seed: 0,
            grad_clip: None,
            target_val_dice: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.t_min > self.t_max {
            return Err(Error::invalid(format!(
                "t_min {} exceeds t_max {}",
                self.t_min, self.t_max
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Integer uniform on `t_min..=t_max`.
pub fn sample_rollout_length(rng: &mut impl Rng, t_min: usize, t_max: usize) -> usize {
    rng.random_range(t_min..=t_max)
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    moment1: Vec<Vec<f32>>,
    moment2: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &NcaParams) -> Self {
        let zeros = || params.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moment1: zeros(),
            moment2: zeros(),
        }
    }

    /// `p ← p·(1 − lr·wd)`, then the bias-corrected Adam step with `grads`
    /// (one buffer per parameter in [`NcaParams::named`] order).
    pub fn update(&mut self, params: &mut NcaParams, grads: &[Vec<f32>], lr: f32, wd: f32) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - (self.beta1 as f64).powi(t);
        let c2 = 1.0 - (self.beta2 as f64).powi(t);
        let decay = 1.0 - lr * wd;
        for (i, (_, p)) in params.named_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.moment1[i], &mut self.moment2[i], &grads[i]);
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = (m[j] as f64 / c1) as f32;
                let v_hat = (v[j] as f64 / c2) as f32;
                let w = &mut p.data_mut()[j];
                *w *= decay;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Loss and parameter gradients of one batch for a fixed rollout length.
///
/// The fire masks come from `rng`, drawn image by image in batch order.
pub fn batch_loss_and_grads(
    batch: &[&Sample],
    params: &NcaParams,
    steps: usize,
    rng: &mut SeededRng,
) -> Result<(f32, Vec<Vec<f32>>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let dims = batch[0].dims();
    if batch.iter().any(|s| s.dims() != dims) {
        return Err(Error::invalid("all images in a batch must share H x W"));
    }
    let hyper = params.hyper;
    let c = hyper.num_channels;
    let mut graph = Graph::new();
    let vars = ParamVars::record(&mut graph, params);
    let mut losses = Vec::with_capacity(batch.len());
    for sample in batch {
        let state0 = init_state(&sample.image, c)?;
        let cells = dims.0 * dims.1;
        let mut state = graph.input(state0.tensor);
        for _ in 0..steps {
            let fired: Arc<[usize]> = fire_mask(rng, cells, hyper.fire_rate).into();
            state = step_recorded(&mut graph, state, &vars, fired)?;
        }
        let logits = graph.select_channels(state, c - 2, 2)?;
        let probs = graph.softmax_channels(logits);
        let loss = graph.cross_entropy_loss(probs, sample.mask.labels().into())?;
        losses.push(loss);
    }
    let loss = graph.mean(&losses)?;
    let value = graph.value(loss).item();
    graph.backward(loss)?;
    let grads = [vars.w1, vars.b1, vars.w2]
        .iter()
        .zip(params.named())
        .map(|(&v, (_, t))| {
            graph
                .grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();
    Ok((value, grads))
}

fn clip_global_norm(grads: &mut [Vec<f32>], max_norm: f32) {
    let norm = grads
        .iter()
        .flatten()
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt() as f32;
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-12);
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
}

/// One optimization step; returns the loss before the update.
pub fn train_step(
    batch: &[&Sample],
    params: &mut NcaParams,
    adam: &mut AdamState,
    config: &TrainConfig,
    rng: &mut SeededRng,
    step_index: usize,
) -> Result<f32> {
    let steps = sample_rollout_length(rng, config.t_min, config.t_max);
    let (loss, mut grads) = batch_loss_and_grads(batch, params, steps, rng)?;
    if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss {
            step: step_index,
            rollout_len: steps,
            batch_ids: batch.iter().map(|s| s.id.clone()).collect(),
        });
    }
    if let Some(max) = config.grad_clip {
        clip_global_norm(&mut grads, max);
    }
    adam.update(params, &grads, config.learning_rate, config.weight_decay);
    Ok(loss)
}

/// Per-sample seed for deterministic evaluation rollouts.
pub fn eval_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// Mean Dice over `samples` after `steps` steps.
pub fn mean_dice(params: &NcaParams, samples: &[&Sample], steps: usize, seed: u64) -> Result<f32> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let dices = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let (_, pred) = predict(params, &s.image, steps, eval_seed(seed, i))?;
            dice(&pred.mask, &s.mask)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((dices.iter().sum::<f64>() / dices.len() as f64) as f32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f32,
    pub val_dice: f32,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: NcaParams,
    pub best_epoch: usize,
    pub best_val_dice: f32,
    pub final_params: NcaParams,
    pub log: Vec<EpochLog>,
}

/// Full training loop over the train split with per-epoch validation at
/// `T = t_max`. `on_epoch` sees each log line as it is produced.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let train_idx = dataset.splits.get(SplitName::Train);
    let val: Vec<&Sample> = dataset.split_samples(SplitName::Val).collect();
    if train_idx.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if val.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }

    let mut params = NcaParams::init(config.hyper, &mut seeded_rng(config.seed, 10))?;
    let mut adam = AdamState::new(&params);
    let mut rng = seeded_rng(config.seed, 11);
    let val_seed = config.seed ^ 0x5641_4c49_4441_5445;

    let mut order = train_idx.to_vec();
    let mut best: Option<(NcaParams, usize, f32)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    let mut global_step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
            let loss = train_step(&batch, &mut params, &mut adam, config, &mut rng, global_step)?;
            total += loss as f64;
            batches += 1;
            global_step += 1;
        }
        let val_dice = mean_dice(&params, &val, config.t_max, val_seed)?;
        let entry = EpochLog {
            epoch,
            mean_loss: (total / batches as f64) as f32,
            val_dice,
        };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(_, _, d)| val_dice > *d) {
            best = Some((params.clone(), epoch, val_dice));
        }
        if config.target_val_dice.is_some_and(|t| val_dice >= t) {
            break;
        }
    }
    let (best, best_epoch, best_val_dice) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_dice,
        final_params: params,
        log,
    })
}

pub fn write_train_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "mean_loss", "val_dice"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            e.mean_loss.to_string(),
            e.val_dice.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Paths written by [`train_to_dir`].
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub log: PathBuf,
}

/// Trains and writes `best.ckpt`, `final.ckpt` and `train_log.csv` to `dir`.
pub fn train_to_dir(
    dataset: &Dataset,
    config: &TrainConfig,
    dir: &Path,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(TrainOutcome, TrainArtifacts)> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e.to_string()))?;
    let outcome = train(dataset, config, on_epoch)?;
    let artifacts = TrainArtifacts {
        best_checkpoint: dir.join("best.ckpt"),
        final_checkpoint: dir.join("final.ckpt"),
        log: dir.join("train_log.csv"),
    };
    save_checkpoint(&outcome.best, &artifacts.best_checkpoint)?;
    save_checkpoint(&outcome.final_params, &artifacts.final_checkpoint)?;
    write_train_log(&artifacts.log, &outcome.log)?;
    Ok((outcome, artifacts))
}
