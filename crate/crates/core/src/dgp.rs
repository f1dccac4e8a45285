//! Multi-fidelity deep GP built as a sequential composition of exact GPs.
//!
//! Layer 1 models the lowest fidelity on the design point `x`. Layer `t > 1`
//! models fidelity `t` on the augmented input `[x, f_{t-1}]`, where at
//! training time `f_{t-1}` is the composed posterior mean of layers
//! `1..t-1` at the training point. Upper layers use `f_{t-1}` itself as
//! their prior mean, so each models a correction to the level below; layer 1
//! is centred on its target mean. Hyperparameters are MAP estimates under
//! weak log-normal priors scaled from data pooled over every level.
//! At prediction time the lower-level output
//! is propagated by Monte Carlo: `S` samples are pushed up the stack and the
//! target level's predictive is summarized by mixture moments.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::FidelityLadder;
use crate::gp::{fit_with, FitOptions, GpDataset, HyperPrior, KernelKind, KernelSpec, MeanFunction, TrainedGp};
use crate::rng;

/// Observations collected at one fidelity level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelObservations {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl LevelObservations {
    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.inputs.push(x);
        self.targets.push(y);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiFidelityDataset {
    dim: usize,
    levels: Vec<LevelObservations>,
}

impl MultiFidelityDataset {
    pub fn new(dim: usize, levels: Vec<LevelObservations>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("input dimension must be >= 1".into()));
        }
        if levels.len() < 2 {
            return Err(Error::Input(format!(
                "multi-fidelity data needs at least two levels, got {}",
                levels.len()
            )));
        }
        for (t, level) in levels.iter().enumerate() {
            if level.is_empty() {
                return Err(Error::InsufficientData { level: t + 1 });
            }
            if level.inputs.len() != level.targets.len() {
                return Err(Error::Shape(format!(
                    "level {}: {} inputs but {} targets",
                    t + 1,
                    level.inputs.len(),
                    level.targets.len()
                )));
            }
            if level.inputs.iter().any(|x| x.len() != dim) {
                return Err(Error::Shape(format!(
                    "level {} has inputs whose dimension differs from {dim}",
                    t + 1
                )));
            }
        }
        Ok(Self { dim, levels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> &[LevelObservations] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub kernel: KernelKind,
    pub restarts: usize,
    pub seed: u64,
    /// Layer noise variance as a fraction of the target variance pooled over all levels.
    pub relative_noise: f64,
    /// Monte-Carlo samples used by `predict_level` / `predict_all_levels`.
    pub propagation_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::SquaredExponential,
            restarts: 3,
            seed: 0,
            relative_noise: 1e-6,
            propagation_samples: 100,
        }
    }
}

/// Mixture moments of one level's predictive distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelPrediction {
    pub mean: f64,
    pub variance: f64,
}

impl LevelPrediction {
    pub fn sigma(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Per-sample predictive moments retained from a propagation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationSamples {
    pub level: usize,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub summary: LevelPrediction,
}

/// Standard-normal draws shared by every query evaluated with the same seed
/// (common random numbers). Row `s` drives sample path `s`; column `k` is the
/// draw used to sample layer `k + 1`'s output.
#[derive(Clone, Debug)]
pub struct BaseDraws {
    samples: usize,
    layers: usize,
    z: Vec<f64>,
}

impl BaseDraws {
    pub fn new(seed: u64, samples: usize, layers: usize) -> Self {
        let mut r = rng::rng(seed);
        let z = (0..samples * layers).map(|_| StandardNormal.sample(&mut r)).collect();
        Self { samples, layers, z }
    }

    #[inline]
    fn get(&self, s: usize, k: usize) -> f64 {
        self.z[s * self.layers + k]
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

#[derive(Clone, Debug)]
pub struct MfDeepGp {
    ladder: FidelityLadder,
    layers: Vec<TrainedGp>,
    propagation_samples: usize,
}

/// Scales pooled over every level. They set the hyperprior medians, so a
/// level with one or two observations borrows its scale from the others.
struct PooledScales {
    input_ranges: Vec<f64>,
    target_variance: f64,
    target_range: f64,
}

/// Prior spread (log space) of every layer hyperparameter.
const PRIOR_LOG_SD: f64 = 1.0;
/// Median lengthscale of a design coordinate as a fraction of its pooled range.
const PRIOR_LENGTHSCALE_FRACTION: f64 = 0.25;

impl PooledScales {
    fn new(data: &MultiFidelityDataset) -> Self {
        let d = data.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut ys = Vec::new();
        for level in data.levels() {
            for x in &level.inputs {
                for j in 0..d {
                    lo[j] = lo[j].min(x[j]);
                    hi[j] = hi[j].max(x[j]);
                }
            }
            ys.extend_from_slice(&level.targets);
        }
        let positive = |v: f64| if v.is_finite() && v > 0.0 { v } else { 1.0 };
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let (ylo, yhi) = ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(*y), b.max(*y)));
        Self {
            input_ranges: lo.iter().zip(&hi).map(|(l, h)| positive(h - l)).collect(),
            target_variance: positive(var),
            target_range: positive(yhi - ylo),
        }
    }

    /// Layer 1 sees `x`; upper layers see `[x, f]`.
    fn prior(&self, augmented: bool) -> HyperPrior {
        let mut lengthscales: Vec<f64> = self
            .input_ranges
            .iter()
            .map(|r| PRIOR_LENGTHSCALE_FRACTION * r)
            .collect();
        if augmented {
            lengthscales.push(self.target_range);
        }
        HyperPrior {
            lengthscales,
            signal_variance: self.target_variance,
            log_sd: PRIOR_LOG_SD,
        }
    }
}

/// Trains one layer per fidelity, conditioning layer `t` on the composed mean of layers `1..t-1`.
pub fn train(data: &MultiFidelityDataset, ladder: &FidelityLadder, config: &TrainConfig) -> Result<MfDeepGp> {
    if ladder.len() != data.num_levels() {
        return Err(Error::Shape(format!(
            "ladder has {} levels, dataset has {}",
            ladder.len(),
            data.num_levels()
        )));
    }
    if config.propagation_samples == 0 {
        return Err(Error::Input("propagation_samples must be >= 1".into()));
    }
    let scales = PooledScales::new(data);
    let mut model = MfDeepGp {
        ladder: ladder.clone(),
        layers: Vec::with_capacity(data.num_levels()),
        propagation_samples: config.propagation_samples,
    };
    for (t, level) in data.levels().iter().enumerate() {
        let rows: Vec<Vec<f64>> = if t == 0 {
            level.inputs.clone()
        } else {
            level
                .inputs
                .iter()
                .map(|x| {
                    let m = model.composed_mean(x, t)?;
                    let mut row = x.clone();
                    row.push(m);
                    Ok(row)
                })
                .collect::<Result<_>>()?
        };
        let noise = config.relative_noise * scales.target_variance;
        let dataset = GpDataset::from_rows(&rows, &level.targets, noise)?;
        let prior = scales.prior(t > 0);
        let init = KernelSpec::new(config.kernel, prior.lengthscales.clone(), prior.signal_variance)?;
        let mean = if t == 0 {
            MeanFunction::Constant(level.targets.iter().sum::<f64>() / level.len() as f64)
        } else {
            MeanFunction::LastInput
        };
        let opts = FitOptions::new(config.restarts, rng::substream(config.seed, "layer", t as u64))
            .with_mean(mean)
            .with_prior(prior);
        model.layers.push(fit_with(dataset, &init, &opts)?);
    }
    Ok(model)
}

impl MfDeepGp {
    /// Reassembles a model from already-conditioned layers.
    pub fn from_layers(ladder: FidelityLadder, layers: Vec<TrainedGp>, propagation_samples: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::State("model has no trained layers".into()));
        }
        if layers.len() != ladder.len() {
            return Err(Error::Shape(format!(
                "{} layers for a {}-level ladder",
                layers.len(),
                ladder.len()
            )));
        }
        let d = layers[0].dim();
        if layers[1..].iter().any(|l| l.dim() != d + 1) {
            return Err(Error::Shape("upper layers must take d + 1 inputs".into()));
        }
        if propagation_samples == 0 {
            return Err(Error::Input("propagation_samples must be >= 1".into()));
        }
        Ok(Self {
            ladder,
            layers,
            propagation_samples,
        })
    }

    pub fn ladder(&self) -> &FidelityLadder {
        &self.ladder
    }

    pub fn layers(&self) -> &[TrainedGp] {
        &self.layers
    }

    pub fn num_levels(&self) -> usize {
        self.layers.len()
    }

    /// Dimension of the design space (inputs of layer 1).
    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }

    pub fn propagation_samples(&self) -> usize {
        self.propagation_samples
    }

    pub fn with_propagation_samples(mut self, samples: usize) -> Self {
        self.propagation_samples = samples.max(1);
        self
    }

    fn check_query(&self, x: &[f64], level: usize) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query has {} coordinates, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        if level == 0 || level > self.num_levels() {
            return Err(Error::Input(format!(
                "fidelity level {level} outside 1..={}",
                self.num_levels()
            )));
        }
        Ok(())
    }

    /// Plug-in composed posterior mean of levels `1..=level`: each layer is fed
    /// the mean of the one below.
    pub fn composed_mean(&self, x: &[f64], level: usize) -> Result<f64> {
        self.check_query(x, level)?;
        let (mut m, _) = self.layers[0].predict_point(x)?;
        let mut aug = x.to_vec();
        aug.push(0.0);
        let d = x.len();
        for layer in &self.layers[1..level] {
            aug[d] = m;
            m = layer.predict_point(&aug)?.0;
        }
        Ok(m)
    }

    /// Largest absolute gap between each upper layer's stored augmented
    /// coordinate and the composed mean recomputed from the layers below.
    pub fn augmented_coordinate_residual(&self) -> Result<f64> {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for (t, layer) in self.layers.iter().enumerate().skip(1) {
            let inputs = layer.dataset().inputs();
            for i in 0..inputs.nrows() {
                let x: Vec<f64> = (0..d).map(|j| inputs[(i, j)]).collect();
                let m = self.composed_mean(&x, t)?;
                worst = worst.max((inputs[(i, d)] - m).abs());
            }
        }
        Ok(worst)
    }

    /// Runs one propagation pass up to `level`, returning moments for every
    /// level `1..=level` and the retained per-sample moments of `level`.
    pub fn propagate(&self, x: &[f64], level: usize, draws: &BaseDraws) -> Result<(Vec<LevelPrediction>, PropagationSamples)> {
        self.check_query(x, level)?;
        if draws.layers < self.num_levels() || draws.samples == 0 {
            return Err(Error::Input("base draws do not cover the model".into()));
        }
        let s_count = draws.samples;
        let (m1, v1) = self.layers[0].predict_point(x)?;
        let mut out = vec![LevelPrediction { mean: m1, variance: v1 }];
        if level == 1 {
            let samples = PropagationSamples {
                level: 1,
                means: vec![m1; s_count],
                variances: vec![v1; s_count],
                summary: out[0],
            };
            return Ok((out, samples));
        }

        let sd1 = v1.sqrt();
        let mut f: Vec<f64> = (0..s_count).map(|s| m1 + sd1 * draws.get(s, 0)).collect();
        let mut means = vec![0.0; s_count];
        let mut vars = vec![0.0; s_count];
        let d = x.len();
        let mut aug = x.to_vec();
        aug.push(0.0);
        for t in 1..level {
            let layer = &self.layers[t];
            for s in 0..s_count {
                aug[d] = f[s];
                let (m, v) = layer.predict_point(&aug)?;
                means[s] = m;
                vars[s] = v;
            }
            out.push(mixture_moments(&means, &vars));
            if t + 1 < level {
                for s in 0..s_count {
                    f[s] = means[s] + vars[s].sqrt() * draws.get(s, t);
                }
            }
        }
        let summary = out[level - 1];
        Ok((
            out,
            PropagationSamples {
                level,
                means,
                variances: vars,
                summary,
            },
        ))
    }

    /// Predictive mean and standard deviation at one fidelity level (1-based).
    pub fn predict_level(&self, x: &[f64], level: usize, rng_seed: u64) -> Result<(f64, f64)> {
        let draws = BaseDraws::new(rng_seed, self.propagation_samples, self.num_levels());
        self.predict_level_with(x, level, &draws)
    }

    pub fn predict_level_with(&self, x: &[f64], level: usize, draws: &BaseDraws) -> Result<(f64, f64)> {
        let (out, _) = self.propagate(x, level, draws)?;
        let p = out[level - 1];
        Ok((p.mean, p.sigma()))
    }

    pub fn predict_level_samples(&self, x: &[f64], level: usize, rng_seed: u64) -> Result<PropagationSamples> {
        let draws = BaseDraws::new(rng_seed, self.propagation_samples, self.num_levels());
        Ok(self.propagate(x, level, &draws)?.1)
    }

    /// `(mu, sigma)` for every level from one shared propagation pass.
    pub fn predict_all_levels(&self, x: &[f64], rng_seed: u64) -> Result<Vec<(f64, f64)>> {
        let draws = BaseDraws::new(rng_seed, self.propagation_samples, self.num_levels());
        self.predict_all_levels_with(x, &draws)
    }

    pub fn predict_all_levels_with(&self, x: &[f64], draws: &BaseDraws) -> Result<Vec<(f64, f64)>> {
        let (out, _) = self.propagate(x, self.num_levels(), draws)?;
        Ok(out.iter().map(|p| (p.mean, p.sigma())).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            ladder: self.ladder.nominals().to_vec(),
            propagation_samples: self.propagation_samples,
            layers: self
                .layers
                .iter()
                .map(|gp| {
                    let data = gp.dataset();
                    LayerCheckpoint {
                        kernel: gp.kernel().clone(),
                        noise_variance: data.noise_variance(),
                        jitter: gp.jitter(),
                        prior_mean: gp.prior_mean(),
                        inputs: (0..data.len()).map(|i| data.row(i)).collect(),
                        targets: data.targets().iter().copied().collect(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let ladder = FidelityLadder::new(ckpt.ladder)?;
        let layers = ckpt
            .layers
            .into_iter()
            .map(|l| {
                let data = GpDataset::from_rows(&l.inputs, &l.targets, l.noise_variance)?;
                TrainedGp::condition_with_jitter(data, l.kernel, l.prior_mean, l.jitter)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(ladder, layers, ckpt.propagation_samples)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint()).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(ckpt)
    }
}

/// Mean of means and mean of variances plus variance of means.
pub fn mixture_moments(means: &[f64], variances: &[f64]) -> LevelPrediction {
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let within = variances.iter().sum::<f64>() / n;
    let between = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
    LevelPrediction {
        mean,
        variance: within + between,
    }
}

const CHECKPOINT_FORMAT: &str = "mfdgp-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub ladder: Vec<f64>,
    pub propagation_samples: usize,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCheckpoint {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub jitter: f64,
    pub prior_mean: MeanFunction,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}
