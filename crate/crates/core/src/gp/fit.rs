//! Type-II maximum likelihood for kernel hyperparameters.
//!
//! Parameters are optimized in log space, `[ln l_1 .. ln l_d, ln s2]`, with a
//! Nelder-Mead simplex. Restart 0 starts from the caller's kernel; further
//! restarts draw lengthscales log-uniformly in `[0.05, 2] x range_i` and set
//! the signal variance from the target variance.
//!
//! An optional log-normal hyperprior turns the objective into a MAP estimate,
//! which keeps tiny datasets (one or two points) from collapsing the signal
//! variance or the lengthscales.

use rand::Rng as _;
use rayon::prelude::*;

use super::kernel::KernelSpec;
use super::model::{GpDataset, MeanFunction, TrainedGp};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::rng;

/// Independent log-normal priors on each lengthscale and the signal variance,
/// with medians given here and a common standard deviation in log space.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperPrior {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub log_sd: f64,
}

impl HyperPrior {
    fn penalty(&self, log_params: &[f64]) -> f64 {
        let medians = self.lengthscales.iter().chain(std::iter::once(&self.signal_variance));
        log_params
            .iter()
            .zip(medians)
            .map(|(p, m)| {
                let z = (p - m.ln()) / self.log_sd;
                0.5 * z * z
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Use the empirical target mean as the constant prior mean.
    pub center_targets: bool,
    /// Explicit prior mean; overrides `center_targets`.
    pub mean: Option<MeanFunction>,
    pub prior: Option<HyperPrior>,
    pub max_evals: usize,
}

impl FitOptions {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            restarts,
            seed,
            center_targets: false,
            mean: None,
            prior: None,
            max_evals: 400,
        }
    }

    pub fn centered(mut self) -> Self {
        self.center_targets = true;
        self
    }

    pub fn with_mean(mut self, mean: MeanFunction) -> Self {
        self.mean = Some(mean);
        self
    }

    pub fn with_prior(mut self, prior: HyperPrior) -> Self {
        self.prior = Some(prior);
        self
    }
}

/// Fits hyperparameters by maximizing the log marginal likelihood with a zero prior mean.
pub fn fit(data: GpDataset, init: &KernelSpec, restarts: usize, rng_seed: u64) -> Result<TrainedGp> {
    fit_with(data, init, &FitOptions::new(restarts, rng_seed))
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn penalty_and_clamp(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let mut pen = 0.0;
        let clamped = p
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (lo, hi))| {
                let c = v.clamp(*lo, *hi);
                pen += (v - c) * (v - c);
                c
            })
            .collect();
        (clamped, pen)
    }
}

fn input_ranges(data: &GpDataset) -> Vec<f64> {
    let x = data.inputs();
    (0..data.dim())
        .map(|j| {
            let col = x.column(j);
            let r = col.max() - col.min();
            if r > 0.0 && r.is_finite() {
                r
            } else {
                1.0
            }
        })
        .collect()
}

/// Second moment of the targets about the prior mean.
fn target_variance(data: &GpDataset, prior_mean: MeanFunction) -> f64 {
    let t = data.targets();
    let n = t.len() as f64;
    let var = t
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let r = y - prior_mean.eval(&data.row(i));
            r * r
        })
        .sum::<f64>()
        / n;
    if var > 0.0 && var.is_finite() {
        var
    } else {
        1.0
    }
}

pub fn fit_with(data: GpDataset, init: &KernelSpec, opts: &FitOptions) -> Result<TrainedGp> {
    if opts.restarts == 0 {
        return Err(Error::Input("restarts must be >= 1".into()));
    }
    if init.dim() != data.dim() {
        return Err(Error::Shape(format!(
            "initial kernel has {} lengthscales, data has {} columns",
            init.dim(),
            data.dim()
        )));
    }
    let d = data.dim();
    let kind = init.kind;
    let prior_mean = match opts.mean {
        Some(m) => m,
        None if opts.center_targets => MeanFunction::Constant(data.targets().mean()),
        None => MeanFunction::Constant(0.0),
    };
    if let Some(p) = &opts.prior {
        if p.lengthscales.len() != d {
            return Err(Error::Shape(format!(
                "hyperprior has {} lengthscales, data has {} columns",
                p.lengthscales.len(),
                d
            )));
        }
        let scales = p.lengthscales.iter().chain(std::iter::once(&p.signal_variance));
        if scales.into_iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(p.log_sd.is_finite() && p.log_sd > 0.0) {
            return Err(Error::Input("hyperprior medians and spread must be positive".into()));
        }
    }
    let mut ranges = input_ranges(&data);
    let mut tvar = target_variance(&data, prior_mean);
    // bounds follow the prior's scales when one is given
    if let Some(p) = &opts.prior {
        ranges = ranges.iter().zip(&p.lengthscales).map(|(r, l)| r.max(*l)).collect();
        tvar = p.signal_variance;
    }

    let mut lo: Vec<f64> = ranges.iter().map(|r| (1e-3 * r).ln()).collect();
    let mut hi: Vec<f64> = ranges.iter().map(|r| (1e3 * r).ln()).collect();
    lo.push((1e-6 * tvar).ln());
    hi.push((1e4 * tvar).ln());
    let bounds = Bounds { lo, hi };

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.restarts);
    let mut first: Vec<f64> = init.lengthscales.iter().map(|l| l.ln()).collect();
    first.push(init.signal_variance.ln());
    starts.push(bounds.penalty_and_clamp(&first).0);
    let mut r = rng::rng(opts.seed);
    for _ in 1..opts.restarts {
        let mut p: Vec<f64> = ranges
            .iter()
            .map(|range| {
                let u: f64 = r.random();
                (0.05f64.ln() + u * (2.0f64.ln() - 0.05f64.ln())) + range.ln()
            })
            .collect();
        p.push(tvar.ln());
        starts.push(p);
    }

    let objective = |p: &[f64]| -> f64 {
        let (c, pen) = bounds.penalty_and_clamp(p);
        let kernel = KernelSpec {
            kind,
            lengthscales: c[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: c[d].exp(),
        };
        let prior_pen = opts.prior.as_ref().map_or(0.0, |pr| pr.penalty(&c));
        match TrainedGp::condition(data.clone(), kernel, prior_mean) {
            Ok(gp) => -gp.log_marginal_likelihood() + prior_pen + 1e3 * pen,
            Err(_) => f64::INFINITY,
        }
    };
    let nm = NelderMeadOptions {
        max_evals: opts.max_evals,
        f_tol: 1e-9,
        x_tol: 1e-6,
        initial_step: 0.7,
    };
    let results: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|s| nelder_mead(objective, s, nm))
        .collect();

    let best = results
        .iter()
        .enumerate()
        .filter(|(_, (_, v))| v.is_finite())
        .min_by(|(ia, a), (ib, b)| a.1.total_cmp(&b.1).then(ia.cmp(ib)))
        .map(|(_, r)| r.0.clone());

    let params = match best {
        Some(p) => bounds.penalty_and_clamp(&p).0,
        // every restart failed to factor; surface the conditioning error from the initial kernel
        None => return TrainedGp::condition(data, init.clone(), prior_mean),
    };
    let kernel = KernelSpec {
        kind,
        lengthscales: params[..d].iter().map(|v| v.exp()).collect(),
        signal_variance: params[d].exp(),
    };
    TrainedGp::condition(data, kernel, prior_mean)
}
