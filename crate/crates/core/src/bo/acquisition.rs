//! UCB maximization at the target fidelity and cost-weighted fidelity choice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::CostModel;
use super::space::DesignSpace;
use crate::design::scrambled_halton;
use crate::dgp::{BaseDraws, MfDeepGp};
use crate::error::{Error, Result};
use crate::fidelity::FidelityLevel;
use crate::optim::compass_search_max;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcbConfig {
    pub beta: f64,
    /// Pool candidates refined by local search.
    pub restarts: usize,
    pub pool_size: usize,
}

impl Default for UcbConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            restarts: 8,
            pool_size: 512,
        }
    }
}

impl UcbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Input(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.restarts == 0 || self.pool_size == 0 {
            return Err(Error::Input("acquisition restarts and pool size must be >= 1".into()));
        }
        Ok(())
    }
}

const REFINE_STEP: f64 = 0.05;
const REFINE_TOL: f64 = 1e-6;

/// Maximizes `f` over `space`: scores a shifted-Halton pool in the unit cube,
/// then compass-searches from the best `restarts` pool points.
/// Non-finite scores count as `-inf`. Returns the point and its score.
pub fn maximize_over<F>(f: F, space: &DesignSpace, pool_size: usize, restarts: usize, seed: u64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let score = |u: &[f64]| {
        let v = f(&space.from_unit(u));
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let pool = scrambled_halton(pool_size.max(1), space.dim(), seed);
    let values: Vec<f64> = pool.par_iter().map(|u| score(u)).collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(restarts.max(1));

    let refined: Vec<(Vec<f64>, f64)> = order
        .par_iter()
        .map(|&i| compass_search_max(score, &pool[i], values[i], REFINE_STEP, REFINE_TOL))
        .collect();
    let (best_u, best_v) = refined
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.1.total_cmp(&b.1).then(ib.cmp(ia)))
        .map(|(_, r)| r)
        .expect("at least one restart");
    (space.from_unit(&best_u), best_v)
}

/// `mu_T(x) + sqrt(beta) sigma_T(x)` with the propagation draws held fixed.
pub fn ucb_value(model: &MfDeepGp, x: &[f64], beta: f64, draws: &BaseDraws) -> Result<f64> {
    let (mu, sigma) = model.predict_level_with(x, model.num_levels(), draws)?;
    Ok(mu + beta.sqrt() * sigma)
}

/// Common-random-number draws for one acquisition solve.
pub fn acquisition_draws(model: &MfDeepGp, seed: u64) -> BaseDraws {
    BaseDraws::new(rng::substream(seed, "crn", 0), model.propagation_samples(), model.num_levels())
}

/// Highest-fidelity UCB maximizer.
pub fn solve_ucb(model: &MfDeepGp, space: &DesignSpace, config: &UcbConfig, rng_seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    if space.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "design space has {} dimensions, model has {}",
            space.dim(),
            model.dim()
        )));
    }
    let draws = acquisition_draws(model, rng_seed);
    let f = |x: &[f64]| ucb_value(model, x, config.beta, &draws).unwrap_or(f64::NEG_INFINITY);
    let (x, _) = maximize_over(
        f,
        space,
        config.pool_size,
        config.restarts,
        rng::substream(rng_seed, "pool", 0),
    );
    Ok(x)
}

/// `argmax_t gamma_t sqrt(beta) sigma_t` with `gamma_t = max(tau) / tau_t`;
/// ties go to the highest level. Returns a 1-based level index.
pub fn choose_level(sigmas: &[f64], tau: &[f64], beta: f64) -> usize {
    let max_tau = tau.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let root_beta = beta.sqrt();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (t, (s, c)) in sigmas.iter().zip(tau).enumerate() {
        let score = (max_tau / c) * root_beta * s;
        if score >= best_score {
            best = t;
            best_score = score;
        }
    }
    best + 1
}

/// Fidelity at which to evaluate `x_star`, from the propagated sigmas of every level.
pub fn select_fidelity(
    model: &MfDeepGp,
    x_star: &[f64],
    cost: &CostModel,
    config: &UcbConfig,
    rng_seed: u64,
) -> Result<FidelityLevel> {
    if cost.tau().len() != model.num_levels() {
        return Err(Error::Shape(format!(
            "cost model has {} levels, DGP has {}",
            cost.tau().len(),
            model.num_levels()
        )));
    }
    let sigmas: Vec<f64> = model
        .predict_all_levels(x_star, rng_seed)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    model.ladder().level(choose_level(&sigmas, cost.tau(), config.beta))
}
