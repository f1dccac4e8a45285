use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running mean evaluation cost `tau_t` per fidelity level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    tau: Vec<f64>,
    counts: Vec<usize>,
}

impl CostModel {
    /// Mean cost per level from the initial design. Every level needs at least one cost.
    pub fn from_initial(costs_per_level: &[Vec<f64>]) -> Result<Self> {
        let mut tau = Vec::with_capacity(costs_per_level.len());
        let mut counts = Vec::with_capacity(costs_per_level.len());
        for (t, costs) in costs_per_level.iter().enumerate() {
            if costs.is_empty() {
                return Err(Error::InsufficientData { level: t + 1 });
            }
            if costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(Error::Input(format!("level {} has a non-positive cost", t + 1)));
            }
            tau.push(costs.iter().sum::<f64>() / costs.len() as f64);
            counts.push(costs.len());
        }
        Ok(Self { tau, counts })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Folds one observed cost at `level` (1-based) into its running mean.
    pub fn update(&mut self, level: usize, observed_cost: f64) -> Result<()> {
        if !(observed_cost.is_finite() && observed_cost > 0.0) {
            return Err(Error::Input(format!("observed cost must be positive, got {observed_cost}")));
        }
        if level == 0 || level > self.tau.len() {
            return Err(Error::Input(format!("level {level} outside 1..={}", self.tau.len())));
        }
        let i = level - 1;
        self.counts[i] += 1;
        self.tau[i] += (observed_cost - self.tau[i]) / self.counts[i] as f64;
        Ok(())
    }

    /// Cost weights `gamma_t = max(tau) / tau_t`.
    pub fn gammas(&self) -> Vec<f64> {
        let max = self.tau.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.tau.iter().map(|t| max / t).collect()
    }
}

/// Functional form of [`CostModel::update`].
pub fn update_costs(cost: &CostModel, level: usize, observed_cost: f64) -> Result<CostModel> {
    let mut next = cost.clone();
    next.update(level, observed_cost)?;
    Ok(next)
}
