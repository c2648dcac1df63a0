//! Image-level uncertainty scores for a trained NCA.
//!
//! Resilience perturbs the final state and measures how much the mask
//! moves after a short relaxation. The five baselines build a per-pixel
//! map (entropy of one rollout, disagreement across stopping times,
//! probability drift, mask flicker, entropy of the test-time augmented
//! average) and average it over a thin band around the predicted boundary.
//!
//! Random streams for a given `seed`: fire masks use stream 0 (every TTA
//! rollout restarts it, so all views share one fire-mask sequence),
//! stopping times use stream 1 and resilience noise uses stream 2.

mod dihedral;
mod maps;
mod morphology;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

pub use dihedral::Dihedral;
pub use maps::{
    aggregate_map, binary_entropy, entropy_map, flicker_map, nearest_rank, stability_map,
    stoptime_map, BandStats,
};
pub use morphology::{boundary_band, dilate, erode};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FloatMap, RgbImage};
use crate::metrics::iou;
use crate::nca::{
    foreground_prob, init_state, rollout, seeded_rng, NcaParams, NcaState,
    SegPrediction, SeededRng, TrajectoryPolicy, IMAGE_CHANNELS,
};

const STOPTIME_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Resilience,
    Single,
    Stoptime,
    Stability,
    Flicker,
    Tta,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Resilience,
        Method::Single,
        Method::Stoptime,
        Method::Stability,
        Method::Flicker,
        Method::Tta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Resilience => "resilience",
            Method::Single => "single",
            Method::Stoptime => "stoptime",
            Method::Stability => "stability",
            Method::Flicker => "flicker",
            Method::Tta => "tta",
        }
    }

    pub fn uses_band(self) -> bool {
        self != Method::Resilience
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method {s:?}; expected one of resilience, single, stoptime, stability, flicker, tta"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyConfig {
    /// Standard deviation of the state perturbation.
    pub sigma: f32,
    /// Relaxation steps after the perturbation.
    pub relax_steps: usize,
    /// Window length for stability and flicker.
    pub window: usize,
    /// Number of sampled stopping times.
    pub stoptime_samples: usize,
    pub t_min: usize,
    pub t_max: usize,
    /// Inference rollout length shared by every method.
    pub rollout_steps: usize,
    pub tta_transforms: Vec<Dihedral>,
    pub band_radius: usize,
    pub threshold: f32,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            sigma: 0.02,
            relax_steps: 12,
            window: 8,
            stoptime_samples: 8,
            t_min: 32,
            t_max: 64,
            rollout_steps: 64,
            tta_transforms: Dihedral::ALL.to_vec(),
            band_radius: 2,
            threshold: 0.5,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.relax_steps == 0 {
            return fail("relax_steps must be at least 1".into());
        }
        if self.window < 2 {
            return fail(format!("window must be at least 2, got {}", self.window));
        }
        if self.stoptime_samples == 0 {
            return fail("stoptime_samples must be at least 1".into());
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return fail(format!(
                "stoptime range must satisfy 1 <= t_min <= t_max, got {}..{}",
                self.t_min, self.t_max
            ));
        }
        if self.rollout_steps < self.window {
            return fail(format!(
                "rollout_steps {} is shorter than the window {}",
                self.rollout_steps, self.window
            ));
        }
        if self.tta_transforms.is_empty() {
            return fail("tta_transforms must not be empty".into());
        }
        if self.band_radius == 0 {
            return fail("band_radius must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return fail(format!("threshold must lie in [0, 1), got {}", self.threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub method: Method,
    pub u: f64,
    pub map: Option<FloatMap>,
    pub band: Option<BandStats>,
}

/// The base prediction for an image plus one report per requested method.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageScores {
    pub prediction: SegPrediction,
    pub reports: Vec<UncertaintyReport>,
}

/// A fire-mask stream that never fires: every uniform draw lands at the
/// top of `[0, 1)`, above any fire rate below one.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenFireStream;

impl RngCore for FrozenFireStream {
    fn next_u32(&mut self) -> u32 {
        u32::MAX
    }

    fn next_u64(&mut self) -> u64 {
        u64::MAX
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        dst.fill(0xff);
    }
}

/// `1 − IoU(a, b)` with the empty/empty convention IoU = 1.
pub fn mask_disagreement(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(1.0 - iou(a, b)?)
}

/// Adds `N(0, sigma²)` noise to the latent channels of `state`.
///
/// A value is drawn for every element, image channels included, so the
/// stream consumption does not depend on the channel layout; the image
/// channels then keep their original values.
pub fn perturb_state(state: &mut NcaState, sigma: f32, noise_rng: &mut impl Rng) {
    let c = state.channels();
    for cell in state.tensor.data_mut().chunks_exact_mut(c) {
        for (ch, v) in cell.iter_mut().enumerate() {
            let z: f32 = noise_rng.sample(StandardNormal);
            if ch >= IMAGE_CHANNELS {
                *v += sigma * z;
            }
        }
    }
}

/// Perturb-and-recover from a final state: returns `(m′, u)` where `u` is
/// the disagreement between the mask `m` of `state` and the relaxed mask
/// `m′`, both thresholded at `threshold`.
///
/// `sigma = 0` is accepted here so the degenerate limit can be checked.
pub fn perturb_and_recover(
    state: &NcaState,
    params: &NcaParams,
    sigma: f32,
    relax_steps: usize,
    threshold: f32,
    fire_rng: &mut impl Rng,
    noise_rng: &mut impl Rng,
) -> Result<(BinaryMask, f64)> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be non-negative, got {sigma}")));
    }
    let before = foreground_prob(state).threshold(threshold);
    let mut perturbed = state.clone();
    perturb_state(&mut perturbed, sigma, noise_rng);
    let (relaxed, _) = rollout(
        perturbed,
        params,
        relax_steps,
        fire_rng,
        &TrajectoryPolicy::None,
    )?;
    let after = foreground_prob(&relaxed).threshold(threshold);
    let u = mask_disagreement(&before, &after)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("resilience score {u} outside [0, 1]")));
    }
    Ok((after, u))
}

/// State, continuing fire-mask stream and recorded maps of one rollout.
struct BaseRun {
    state: NcaState,
    rng: SeededRng,
    /// Foreground maps for `t = 0..=T`.
    probs: Vec<FloatMap>,
}

impl BaseRun {
    fn new(params: &NcaParams, image: &RgbImage, seed: u64, steps: usize) -> Result<Self> {
        let state = init_state(image, params.hyper.num_channels)?;
        let mut rng = seeded_rng(seed, 0);
        let (state, traj) = rollout(state, params, steps, &mut rng, &TrajectoryPolicy::All)?;
        let probs = traj.expect("recording requested").probs;
        Ok(Self { state, rng, probs })
    }

    fn steps(&self) -> usize {
        self.probs.len() - 1
    }

    fn final_prob(&self) -> &FloatMap {
        self.probs.last().expect("at least the initial map")
    }
}

fn banded(method: Method, map: FloatMap, mask: &BinaryMask, radius: usize) -> Result<UncertaintyReport> {
    let stats = aggregate_map(&map, &boundary_band(mask, radius))?;
    Ok(UncertaintyReport {
        method,
        u: stats.mean,
        map: Some(map),
        band: Some(stats),
    })
}

fn resilience_from(
    base: &BaseRun,
    params: &NcaParams,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    let mut fire_rng = base.rng.clone();
    let mut noise_rng = seeded_rng(seed, NOISE_STREAM);
    let (_, u) = perturb_and_recover(
        &base.state,
        params,
        config.sigma,
        config.relax_steps,
        config.threshold,
        &mut fire_rng,
        &mut noise_rng,
    )?;
    Ok(UncertaintyReport {
        method: Method::Resilience,
        u,
        map: None,
        band: None,
    })
}

fn single_from(base: &BaseRun, config: &UncertaintyConfig) -> Result<UncertaintyReport> {
    let prob = base.final_prob();
    banded(
        Method::Single,
        entropy_map(prob),
        &prob.threshold(config.threshold),
        config.band_radius,
    )
}

fn stability_from(base: &BaseRun, config: &UncertaintyConfig) -> Result<UncertaintyReport> {
    let t = base.steps();
    let map = stability_map(&base.probs[t - config.window..])?;
    banded(
        Method::Stability,
        map,
        &base.final_prob().threshold(config.threshold),
        config.band_radius,
    )
}

fn flicker_from(base: &BaseRun, config: &UncertaintyConfig) -> Result<UncertaintyReport> {
    let t = base.steps();
    let masks: Vec<BinaryMask> = base.probs[t + 1 - config.window..]
        .iter()
        .map(|p| p.threshold(config.threshold))
        .collect();
    banded(
        Method::Flicker,
        flicker_map(&masks)?,
        masks.last().expect("window >= 2"),
        config.band_radius,
    )
}

/// Stopping times `T_k ~ U{t_min..=t_max}` for `seed`.
pub fn sample_stop_times(seed: u64, config: &UncertaintyConfig) -> Vec<usize> {
    let mut rng = seeded_rng(seed, STOPTIME_STREAM);
    (0..config.stoptime_samples)
        .map(|_| rng.random_range(config.t_min..=config.t_max))
        .collect()
}

fn stoptime_from(
    base: &BaseRun,
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    let stops = sample_stop_times(seed, config);
    let longer;
    let probs = if base.steps() >= config.t_max {
        &base.probs
    } else {
        // the shared rollout stops before t_max: rerun the same stream further
        longer = BaseRun::new(params, image, seed, config.t_max)?;
        &longer.probs
    };
    let maps: Vec<&FloatMap> = stops
        .iter()
        .chain(std::iter::once(&config.t_max))
        .map(|&t| &probs[t])
        .collect();
    let masks: Vec<BinaryMask> = maps.iter().map(|p| p.threshold(config.threshold)).collect();
    let (last, checkpoints) = masks.split_last().expect("K >= 1");
    let refs: Vec<&BinaryMask> = checkpoints.iter().collect();
    banded(
        Method::Stoptime,
        stoptime_map(&refs, last)?,
        last,
        config.band_radius,
    )
}

/// Transforms applicable to an image of the given shape.
pub fn tta_set(config: &UncertaintyConfig, height: usize, width: usize) -> Vec<Dihedral> {
    config
        .tta_transforms
        .iter()
        .copied()
        .filter(|d| height == width || d.preserves_shape())
        .collect()
}

fn tta_from(
    base: &BaseRun,
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    let (h, w) = image.dims();
    let set = tta_set(config, h, w);
    if set.is_empty() {
        return Err(Error::invalid(
            "no TTA transform preserves the shape of this non-square image",
        ));
    }
    let mut sum = vec![0.0f64; h * w];
    for d in &set {
        let prob = if *d == Dihedral::Identity {
            // identical to the base rollout: same image, same fire-mask stream
            base.final_prob().clone()
        } else {
            let warped = d.apply_image(image);
            let state = init_state(&warped, params.hyper.num_channels)?;
            let mut rng = seeded_rng(seed, 0);
            let (state, _) = rollout(
                state,
                params,
                config.rollout_steps,
                &mut rng,
                &TrajectoryPolicy::None,
            )?;
            d.inverse().apply_map(&foreground_prob(&state))
        };
        for (s, &p) in sum.iter_mut().zip(prob.data()) {
            *s += f64::from(p);
        }
    }
    let n = set.len() as f64;
    let mean = FloatMap::new(h, w, sum.iter().map(|&s| (s / n) as f32).collect())?;
    banded(
        Method::Tta,
        entropy_map(&mean),
        &base.final_prob().threshold(config.threshold),
        config.band_radius,
    )
}

/// Scores `image` with every method in `methods`, sharing one base rollout.
///
/// Each report equals the one the corresponding single-method function
/// returns for the same arguments.
pub fn score_methods(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
    methods: &[Method],
) -> Result<ImageScores> {
    config.validate()?;
    let base = BaseRun::new(params, image, seed, config.rollout_steps)?;
    let mut reports = Vec::with_capacity(methods.len());
    for &m in methods {
        let report = match m {
            Method::Resilience => resilience_from(&base, params, seed, config)?,
            Method::Single => single_from(&base, config)?,
            Method::Stoptime => stoptime_from(&base, params, image, seed, config)?,
            Method::Stability => stability_from(&base, config)?,
            Method::Flicker => flicker_from(&base, config)?,
            Method::Tta => tta_from(&base, params, image, seed, config)?,
        };
        if !report.u.is_finite() {
            return Err(Error::invalid(format!("{m} produced a non-finite score")));
        }
        reports.push(report);
    }
    let prediction = SegPrediction {
        prob: base.final_prob().clone(),
        mask: base.final_prob().threshold(config.threshold),
    };
    Ok(ImageScores {
        prediction,
        reports,
    })
}

pub fn score_all(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<ImageScores> {
    score_methods(params, image, seed, config, &Method::ALL)
}

fn score_one(
    method: Method,
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    let mut scores = score_methods(params, image, seed, config, &[method])?;
    Ok(scores.reports.remove(0))
}

/// `u = 1 − IoU(m, m′)` after perturbing the final state and relaxing.
pub fn resilience(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    score_one(Method::Resilience, params, image, seed, config)
}

/// Band-averaged entropy of the final foreground probability.
pub fn entropy_single(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    score_one(Method::Single, params, image, seed, config)
}

/// Band-averaged disagreement between sampled stopping times and `t_max`.
pub fn stoptime(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    score_one(Method::Stoptime, params, image, seed, config)
}

/// Band-averaged probability drift over the last `window` transitions.
pub fn stability(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    score_one(Method::Stability, params, image, seed, config)
}

/// Band-averaged mask flip rate over the last `window` states.
pub fn flicker(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    score_one(Method::Flicker, params, image, seed, config)
}

/// Band-averaged entropy of the dihedral test-time augmented average.
pub fn tta(
    params: &NcaParams,
    image: &RgbImage,
    seed: u64,
    config: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    score_one(Method::Tta, params, image, seed, config)
}

/// Text dump of a map: a `H W` header line, then one row per line.
pub fn format_map(map: &FloatMap) -> String {
    let (h, w) = map.dims();
    let mut out = format!("{h} {w}\n");
    for y in 0..h {
        let row: Vec<String> = (0..w).map(|x| format!("{}", map.get(y, x))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_map(text: &str) -> Result<FloatMap> {
    let mut tokens = text.split_whitespace();
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::invalid("map dump is missing its `H W` header"))
    };
    let (h, w) = (dim()?, dim()?);
    let values = tokens
        .map(|t| {
            t.parse::<f32>()
                .map_err(|_| Error::invalid(format!("bad map value {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    FloatMap::new(h, w, values)
}
