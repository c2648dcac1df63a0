//! The segmentation NCA: state, stochastic local update rule, rollout and
//! readout.
//!
//! Each cell (pixel) holds `C` channels. Channels `0..3` carry the input
//! image and are never written by the update rule; the last two channels
//! are the background/foreground logits. One step perceives the 3×3
//! neighborhood with fixed identity/Sobel filters, runs a two-layer
//! per-cell MLP on the perception vector, and adds the result to the
//! latent channels of the cells selected by a Bernoulli fire mask.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{kernels, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FloatMap, RgbImage};

/// Number of leading state channels holding the RGB input.
pub const IMAGE_CHANNELS: usize = 3;

/// Number of fixed perception filters (identity, Sobel-x, Sobel-y).
pub const PERCEPTION_FILTERS: usize = 3;

/// Deterministic RNG used for every stochastic choice in the crate.
pub type SeededRng = ChaCha8Rng;

/// RNG for `seed` on an independent sub-stream.
///
/// Stream 0 drives fire masks; other streams carry auxiliary draws
/// (noise, sampled stopping times) so they never shift the mask sequence.
pub fn seeded_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fixed hyperparameters of the update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcaHyper {
    pub num_channels: usize,
    pub hidden_size: usize,
    pub fire_rate: f32,
}

impl Default for NcaHyper {
    fn default() -> Self {
        Self {
            num_channels: 64,
            hidden_size: 128,
            fire_rate: 0.5,
        }
    }
}

impl NcaHyper {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels <= IMAGE_CHANNELS + 2 {
            return Err(Error::invalid(format!(
                "num_channels must exceed {} (image + two logits), got {}",
                IMAGE_CHANNELS + 2,
                self.num_channels
            )));
        }
        if self.hidden_size == 0 {
            return Err(Error::invalid("hidden_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.fire_rate) {
            return Err(Error::invalid(format!(
                "fire_rate must lie in [0, 1], got {}",
                self.fire_rate
            )));
        }
        Ok(())
    }

    pub fn latent_channels(&self) -> usize {
        self.num_channels - IMAGE_CHANNELS
    }

    pub fn perception_size(&self) -> usize {
        self.num_channels * PERCEPTION_FILTERS
    }
}

/// Identity, Sobel-x and Sobel-y as a `[3, 3, 3]` tensor.
pub fn perception_kernels() -> Arc<Tensor> {
    static KERNELS: OnceLock<Arc<Tensor>> = OnceLock::new();
    KERNELS
        .get_or_init(|| {
            #[rustfmt::skip]
            let data = vec![
                0.0, 0.0, 0.0,
                0.0, 1.0, 0.0,
                0.0, 0.0, 0.0,

                -1.0, 0.0, 1.0,
                -2.0, 0.0, 2.0,
                -1.0, 0.0, 1.0,

                -1.0, -2.0, -1.0,
                0.0, 0.0, 0.0,
                1.0, 2.0, 1.0,
            ];
            Arc::new(Tensor::new(vec![PERCEPTION_FILTERS, 3, 3], data).unwrap())
        })
        .clone()
}

/// Learnable weights of the update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct NcaParams {
    pub hyper: NcaHyper,
    /// `[hidden, 3C]`
    pub w1: Tensor,
    /// `[hidden]`
    pub b1: Tensor,
    /// `[C - 3, hidden]`, no bias.
    pub w2: Tensor,
}

impl NcaParams {
    /// Fresh parameters: `w1 ~ U(±sqrt(1/3C))`, `b1 = 0`, `w2 = 0`.
    pub fn init(hyper: NcaHyper, rng: &mut impl Rng) -> Result<Self> {
        hyper.validate()?;
        let fan_in = hyper.perception_size();
        let bound = (1.0 / fan_in as f32).sqrt();
        let w1 = (0..hyper.hidden_size * fan_in)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Ok(Self {
            hyper,
            w1: Tensor::new(vec![hyper.hidden_size, fan_in], w1)?,
            b1: Tensor::zeros(vec![hyper.hidden_size]),
            w2: Tensor::zeros(vec![hyper.latent_channels(), hyper.hidden_size]),
        })
    }

    /// Builds parameters from explicit tensors, checking every shape.
    pub fn from_tensors(hyper: NcaHyper, w1: Tensor, b1: Tensor, w2: Tensor) -> Result<Self> {
        hyper.validate()?;
        let expect = [
            ("w1", &w1, vec![hyper.hidden_size, hyper.perception_size()]),
            ("b1", &b1, vec![hyper.hidden_size]),
            ("w2", &w2, vec![hyper.latent_channels(), hyper.hidden_size]),
        ];
        for (name, t, shape) in expect {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(
                    "NcaParams",
                    format!("{name} expected {shape:?}, got {:?}", t.shape()),
                ));
            }
        }
        Ok(Self { hyper, w1, b1, w2 })
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 3] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2)]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 3] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len()
    }
}

/// Automaton state `S_t`, shape `[H, W, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NcaState {
    pub tensor: Tensor,
    pub step: usize,
}

impl NcaState {
    pub fn height(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[2]
    }

    /// Copies the image channels back out of the state.
    pub fn image(&self) -> RgbImage {
        let c = self.channels();
        let mut data = Vec::with_capacity(self.height() * self.width() * 3);
        for cell in self.tensor.data().chunks_exact(c) {
            data.extend_from_slice(&cell[..IMAGE_CHANNELS]);
        }
        RgbImage::new(self.height(), self.width(), data).expect("dims from state")
    }
}

/// `S_0`: image in channels `0..3`, zeros elsewhere.
pub fn init_state(image: &RgbImage, num_channels: usize) -> Result<NcaState> {
    let (h, w) = image.dims();
    if h < 3 || w < 3 {
        return Err(Error::invalid(format!(
            "image must be at least 3x3, got {h}x{w}"
        )));
    }
    if num_channels < IMAGE_CHANNELS + 2 {
        return Err(Error::invalid(format!(
            "need at least {} channels, got {num_channels}",
            IMAGE_CHANNELS + 2
        )));
    }
    let mut data = vec![0.0f32; h * w * num_channels];
    for (cell, px) in data
        .chunks_exact_mut(num_channels)
        .zip(image.data().chunks_exact(3))
    {
        cell[..IMAGE_CHANNELS].copy_from_slice(px);
    }
    Ok(NcaState {
        tensor: Tensor::new(vec![h, w, num_channels], data)?,
        step: 0,
    })
}

/// Indices of the cells that update this step.
///
/// Exactly one uniform draw per cell is consumed regardless of the rate,
/// so the RNG stream stays aligned across configurations.
pub fn fire_mask(rng: &mut impl Rng, cells: usize, fire_rate: f32) -> Vec<usize> {
    (0..cells)
        .filter(|_| rng.random::<f32>() < fire_rate)
        .collect()
}

/// Per-cell update vectors for the given fired cells.
fn update_deltas(state: &NcaState, params: &NcaParams, fired: &[usize]) -> Vec<f32> {
    let hyper = &params.hyper;
    let (h, w, c) = (state.height(), state.width(), state.channels());
    let p = hyper.perception_size();
    let gathered = kernels::conv3x3_forward_at(
        state.tensor.data(),
        h,
        w,
        c,
        perception_kernels().data(),
        fired,
    );
    let hidden = kernels::affine_forward(
        &gathered,
        fired.len(),
        p,
        params.w1.data(),
        Some(params.b1.data()),
        hyper.hidden_size,
    );
    let hidden = kernels::relu_forward(&hidden);
    kernels::affine_forward(
        &hidden,
        fired.len(),
        hyper.hidden_size,
        params.w2.data(),
        None,
        hyper.latent_channels(),
    )
}

/// One application of the update rule, `S_{t+1} = F(S_t)`.
pub fn step(mut state: NcaState, params: &NcaParams, rng: &mut impl Rng) -> Result<NcaState> {
    let c = params.hyper.num_channels;
    if state.channels() != c {
        return Err(Error::shape(
            "step",
            format!("state has {} channels, params expect {c}", state.channels()),
        ));
    }
    let cells = state.height() * state.width();
    let fired = fire_mask(rng, cells, params.hyper.fire_rate);
    if !fired.is_empty() {
        let delta = update_deltas(&state, params, &fired);
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: state.step });
        }
        let latent = params.hyper.latent_channels();
        let data = state.tensor.data_mut();
        for (i, &r) in fired.iter().enumerate() {
            let dst = &mut data[r * c + IMAGE_CHANNELS..(r + 1) * c];
            for (d, v) in dst.iter_mut().zip(&delta[i * latent..(i + 1) * latent]) {
                *d += v;
            }
        }
    }
    state.step += 1;
    Ok(state)
}

/// Graph handles for one set of parameters.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
}

impl ParamVars {
    /// Records the parameters as learnable inputs of `graph`.
    pub fn record(graph: &mut Graph, params: &NcaParams) -> Self {
        Self {
            w1: graph.input(params.w1.clone().with_grad()),
            b1: graph.input(params.b1.clone().with_grad()),
            w2: graph.input(params.w2.clone().with_grad()),
        }
    }
}

/// Recorded counterpart of [`step`] for a precomputed fire mask.
///
/// Produces the same values as the tape-free path for the same mask.
pub fn step_recorded(
    graph: &mut Graph,
    state: Var,
    params: &ParamVars,
    fired: Arc<[usize]>,
) -> Result<Var> {
    if fired.is_empty() {
        return Ok(state);
    }
    let gathered = graph.depthwise_conv3x3_at(state, perception_kernels(), fired.clone())?;
    let hidden = graph.pointwise_affine(gathered, params.w1, Some(params.b1))?;
    let hidden = graph.relu(hidden);
    let delta = graph.pointwise_affine(hidden, params.w2, None)?;
    graph.scatter_add_rows(state, delta, fired, IMAGE_CHANNELS)
}

/// Which intermediate predictions a rollout keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrajectoryPolicy {
    None,
    /// Foreground maps after each of the last `n` steps, plus the state
    /// just before them when available (so `n` transitions are covered).
    LastWindow(usize),
    /// Every step including the initial state.
    All,
    /// Only after the listed step counts (absolute `t`).
    AtSteps(Vec<usize>),
}

/// Recorded foreground probability maps, ordered by step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<usize>,
    pub probs: Vec<FloatMap>,
}

impl Trajectory {
    pub fn masks(&self, threshold: f32) -> Vec<BinaryMask> {
        self.probs.iter().map(|p| p.threshold(threshold)).collect()
    }

    pub fn at(&self, step: usize) -> Option<&FloatMap> {
        self.steps
            .iter()
            .position(|&s| s == step)
            .map(|i| &self.probs[i])
    }

    fn push(&mut self, state: &NcaState) {
        self.steps.push(state.step);
        self.probs.push(foreground_prob(state));
    }
}

/// Applies [`step`] `steps` times.
pub fn rollout(
    mut state: NcaState,
    params: &NcaParams,
    steps: usize,
    rng: &mut impl Rng,
    record: &TrajectoryPolicy,
) -> Result<(NcaState, Option<Trajectory>)> {
    let start = state.step;
    let end = start + steps;
    let wants = |t: usize| -> bool {
        match record {
            TrajectoryPolicy::None => false,
            TrajectoryPolicy::All => true,
            TrajectoryPolicy::LastWindow(n) => t + n >= end,
            TrajectoryPolicy::AtSteps(list) => list.contains(&t),
        }
    };
    let mut traj = (*record != TrajectoryPolicy::None).then(Trajectory::default);
    if let Some(tr) = traj.as_mut() {
        if wants(start) {
            tr.push(&state);
        }
    }
    for _ in 0..steps {
        state = step(state, params, rng)?;
        if let Some(tr) = traj.as_mut() {
            if wants(state.step) {
                tr.push(&state);
            }
        }
    }
    Ok((state, traj))
}

/// Binary segmentation read from the state.
#[derive(Debug, Clone, PartialEq)]
pub struct SegPrediction {
    pub prob: FloatMap,
    pub mask: BinaryMask,
}

/// Logit pairs `(background, foreground)` from the last two channels.
fn logits(state: &NcaState) -> Vec<f32> {
    let c = state.channels();
    let mut out = Vec::with_capacity(state.height() * state.width() * 2);
    for cell in state.tensor.data().chunks_exact(c) {
        out.extend_from_slice(&cell[c - 2..]);
    }
    out
}

/// Foreground probability map (softmax over the two logit channels).
pub fn foreground_prob(state: &NcaState) -> FloatMap {
    let probs = kernels::softmax_forward(&logits(state), 2);
    let fg = probs.chunks_exact(2).map(|p| p[1]).collect();
    FloatMap::new(state.height(), state.width(), fg).expect("dims from state")
}

/// Readout `o(S)`: foreground probability and its `> 0.5` mask.
pub fn readout(state: &NcaState) -> SegPrediction {
    let prob = foreground_prob(state);
    let mask = prob.threshold(0.5);
    SegPrediction { prob, mask }
}

/// Runs the NCA from the image for `steps` steps with fire-mask seed `seed`.
pub fn predict(
    params: &NcaParams,
    image: &RgbImage,
    steps: usize,
    seed: u64,
) -> Result<(NcaState, SegPrediction)> {
    let state = init_state(image, params.hyper.num_channels)?;
    let mut rng = seeded_rng(seed, 0);
    let (state, _) = rollout(state, params, steps, &mut rng, &TrajectoryPolicy::None)?;
    let pred = readout(&state);
    Ok((state, pred))
}
