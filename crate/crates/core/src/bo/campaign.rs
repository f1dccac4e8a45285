//! The campaign loop: per-level initial design, then repeated
//! train -> UCB at the top level -> fidelity choice -> evaluate -> record,
//! until the accumulated evaluation cost reaches the budget.

use serde::{Deserialize, Serialize};

use super::acquisition::{maximize_over, select_fidelity, solve_ucb, UcbConfig};
use super::cost::CostModel;
use super::space::DesignSpace;
use crate::design::latin_hypercube;
use crate::dgp::{self, LevelObservations, MfDeepGp, MultiFidelityDataset, TrainConfig};
use crate::error::{Error, Result};
use crate::gp::{fit_with, FitOptions, GpDataset, KernelKind, KernelSpec};
use crate::objectives::MultiFidelityObjective;
use crate::rng;

/// Tolerance of the ledger identity `budget_spent == sum of record costs`.
pub const LEDGER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    InitialDesign,
    BoLoop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationRecord {
    pub x: Vec<f64>,
    /// 1-based fidelity index.
    pub level: usize,
    pub y: f64,
    pub cost: f64,
    /// 0 for the initial design, then 1, 2, ... per loop iteration.
    pub iteration: usize,
    pub phase: Phase,
}

/// Why a campaign stopped before exhausting its budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFailure {
    pub iteration: usize,
    pub level: usize,
    pub x: Vec<f64>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub kernel: KernelKind,
    /// Likelihood restarts per layer.
    pub restarts: usize,
    pub relative_noise: f64,
    /// Monte-Carlo samples during acquisition solves.
    pub propagation_samples: usize,
    /// Monte-Carlo samples for final reporting.
    pub report_samples: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            kernel: KernelKind::SquaredExponential,
            restarts: 3,
            relative_noise: 1e-6,
            propagation_samples: 100,
            report_samples: 2000,
        }
    }
}

impl ModelSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            kernel: self.kernel,
            restarts: self.restarts,
            seed,
            relative_noise: self.relative_noise,
            propagation_samples: self.propagation_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignSettings {
    /// Initial samples per fidelity level.
    pub n_initial: usize,
    pub ucb: UcbConfig,
    pub budget_total: f64,
    pub seed: u64,
    pub model: ModelSettings,
}

impl CampaignSettings {
    pub fn new(n_initial: usize, budget_total: f64, seed: u64) -> Self {
        Self {
            n_initial,
            ucb: UcbConfig::default(),
            budget_total,
            seed,
            model: ModelSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_initial == 0 {
            return Err(Error::Input("n_initial must be >= 1".into()));
        }
        if !(self.budget_total.is_finite() && self.budget_total > 0.0) {
            return Err(Error::Input(format!("budget must be positive, got {}", self.budget_total)));
        }
        if self.model.restarts == 0 || self.model.propagation_samples == 0 || self.model.report_samples == 0 {
            return Err(Error::Input("model restarts and sample counts must be >= 1".into()));
        }
        if !(self.model.relative_noise.is_finite() && self.model.relative_noise >= 0.0) {
            return Err(Error::Input("relative noise must be >= 0".into()));
        }
        self.ucb.validate()
    }
}

/// Full ledger of a campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignState {
    pub records: Vec<EvaluationRecord>,
    pub cost_model: CostModel,
    pub budget_total: f64,
    pub budget_spent: f64,
    pub rng_seed: u64,
    pub num_levels: usize,
    pub incumbent: Option<EvaluationRecord>,
    pub failure: Option<CampaignFailure>,
}

impl CampaignState {
    /// Rebuilds a state from its record sequence, repeating the exact
    /// arithmetic of a live run (initial means, then running-mean updates).
    pub fn replay(records: Vec<EvaluationRecord>, num_levels: usize, budget_total: f64, rng_seed: u64) -> Result<Self> {
        let n_initial_records = records.iter().take_while(|r| r.phase == Phase::InitialDesign).count();
        if records[n_initial_records..].iter().any(|r| r.phase == Phase::InitialDesign) {
            return Err(Error::State("initial-design record after the loop started".into()));
        }
        for r in &records {
            if r.level == 0 || r.level > num_levels {
                return Err(Error::State(format!("record level {} outside 1..={num_levels}", r.level)));
            }
            if !(r.cost.is_finite() && r.cost > 0.0) || !r.y.is_finite() {
                return Err(Error::State(format!("record has invalid cost {} or value {}", r.cost, r.y)));
            }
        }
        let mut per_level = vec![Vec::new(); num_levels];
        for r in &records[..n_initial_records] {
            per_level[r.level - 1].push(r.cost);
        }
        let mut cost_model = CostModel::from_initial(&per_level)?;
        let mut state = Self {
            records: Vec::with_capacity(records.len()),
            cost_model: cost_model.clone(),
            budget_total,
            budget_spent: 0.0,
            rng_seed,
            num_levels,
            incumbent: None,
            failure: None,
        };
        for (i, r) in records.into_iter().enumerate() {
            if i >= n_initial_records {
                cost_model.update(r.level, r.cost)?;
            }
            state.absorb(r);
        }
        state.cost_model = cost_model;
        Ok(state)
    }

    fn absorb(&mut self, r: EvaluationRecord) {
        self.budget_spent += r.cost;
        if r.level == self.num_levels && self.incumbent.as_ref().is_none_or(|inc| r.y > inc.y) {
            self.incumbent = Some(r.clone());
        }
        self.records.push(r);
    }

    pub fn budget_exhausted(&self) -> bool {
        self.budget_spent >= self.budget_total
    }

    pub fn loop_iterations(&self) -> usize {
        self.records.iter().filter(|r| r.phase == Phase::BoLoop).count()
    }

    pub fn per_level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_levels];
        for r in &self.records {
            counts[r.level - 1] += 1;
        }
        counts
    }

    pub fn dataset(&self, dim: usize) -> Result<MultiFidelityDataset> {
        let mut levels = vec![LevelObservations::default(); self.num_levels];
        for r in &self.records {
            levels[r.level - 1].push(r.x.clone(), r.y);
        }
        MultiFidelityDataset::new(dim, levels)
    }

    /// Checks the budget and incumbent invariants.
    pub fn check_ledger(&self) -> Result<()> {
        let sum: f64 = self.records.iter().map(|r| r.cost).sum();
        if (sum - self.budget_spent).abs() > LEDGER_TOL {
            return Err(Error::State(format!(
                "budget_spent {} differs from summed costs {sum}",
                self.budget_spent
            )));
        }
        if let Some(last) = self.records.last() {
            if last.phase == Phase::BoLoop && self.budget_spent - self.budget_total >= last.cost {
                return Err(Error::State("more than one evaluation overshot the budget".into()));
            }
        }
        let best = self
            .records
            .iter()
            .filter(|r| r.level == self.num_levels)
            .map(|r| r.y)
            .fold(f64::NEG_INFINITY, f64::max);
        match &self.incumbent {
            Some(inc) if inc.y == best => Ok(()),
            None if best == f64::NEG_INFINITY => Ok(()),
            _ => Err(Error::State("incumbent is not the best top-level record".into())),
        }
    }
}

/// Evaluates `n` Latin-hypercube points per level (independent designs per level).
pub fn initial_design(
    objective: &dyn MultiFidelityObjective,
    space: &DesignSpace,
    n: usize,
    budget_total: f64,
    rng_seed: u64,
) -> Result<CampaignState> {
    initial_design_observed(objective, space, n, budget_total, rng_seed, &mut |_| {})
}

fn initial_design_observed(
    objective: &dyn MultiFidelityObjective,
    space: &DesignSpace,
    n: usize,
    budget_total: f64,
    rng_seed: u64,
    on_record: &mut dyn FnMut(&EvaluationRecord),
) -> Result<CampaignState> {
    let levels = objective.ladder().len();
    if n == 0 {
        return Err(Error::Input("n must be >= 1".into()));
    }
    if levels < 2 {
        return Err(Error::Input("need at least two fidelity levels".into()));
    }
    if space.dim() != objective.dimension() {
        return Err(Error::Shape(format!(
            "design space has {} dimensions, objective {} has {}",
            space.dim(),
            objective.name(),
            objective.dimension()
        )));
    }
    let mut records = Vec::with_capacity(n * levels);
    for level in 1..=levels {
        let design = latin_hypercube(n, space.dim(), rng::substream(rng_seed, "design", level as u64));
        for u in design {
            let x = space.from_unit(&u);
            let e = objective
                .evaluate(&x, level)
                .and_then(check_evaluation)
                .map_err(|e| Error::CampaignInit {
                    x: x.clone(),
                    level,
                    message: e.to_string(),
                })?;
            let rec = EvaluationRecord {
                x,
                level,
                y: e.value,
                cost: e.cost,
                iteration: 0,
                phase: Phase::InitialDesign,
            };
            on_record(&rec);
            records.push(rec);
        }
    }
    CampaignState::replay(records, levels, budget_total, rng_seed)
}

fn check_evaluation(e: crate::objectives::Evaluation) -> Result<crate::objectives::Evaluation> {
    if !e.value.is_finite() {
        return Err(Error::Input(format!("objective returned non-finite value {}", e.value)));
    }
    if !(e.cost.is_finite() && e.cost > 0.0) {
        return Err(Error::Input(format!("objective returned non-positive cost {}", e.cost)));
    }
    Ok(e)
}

pub struct Campaign<'a> {
    objective: &'a dyn MultiFidelityObjective,
    space: DesignSpace,
    settings: CampaignSettings,
    state: CampaignState,
}

impl<'a> Campaign<'a> {
    /// Runs the initial design, reporting each record as it is produced.
    pub fn initialize(
        objective: &'a dyn MultiFidelityObjective,
        space: DesignSpace,
        settings: CampaignSettings,
        on_record: &mut dyn FnMut(&EvaluationRecord),
    ) -> Result<Self> {
        settings.validate()?;
        let state = initial_design_observed(
            objective,
            &space,
            settings.n_initial,
            settings.budget_total,
            settings.seed,
            on_record,
        )?;
        Ok(Self {
            objective,
            space,
            settings,
            state,
        })
    }

    /// Continues from a reconstructed state.
    pub fn from_state(
        objective: &'a dyn MultiFidelityObjective,
        space: DesignSpace,
        settings: CampaignSettings,
        state: CampaignState,
    ) -> Result<Self> {
        settings.validate()?;
        if state.num_levels != objective.ladder().len() {
            return Err(Error::State(format!(
                "state has {} levels, objective has {}",
                state.num_levels,
                objective.ladder().len()
            )));
        }
        Ok(Self {
            objective,
            space,
            settings,
            state,
        })
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn into_state(self) -> CampaignState {
        self.state
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn settings(&self) -> &CampaignSettings {
        &self.settings
    }

    pub fn extend_budget(&mut self, extra: f64) {
        self.state.budget_total += extra;
        self.settings.budget_total = self.state.budget_total;
    }

    pub fn train_model(&self, seed: u64) -> Result<MfDeepGp> {
        let data = self.state.dataset(self.space.dim())?;
        dgp::train(&data, self.objective.ladder(), &self.settings.model.train_config(seed))
    }

    /// One loop iteration. An objective failure is recorded in `state.failure`
    /// and returned as an error.
    pub fn step(&mut self, on_record: &mut dyn FnMut(&EvaluationRecord)) -> Result<EvaluationRecord> {
        let iteration = self.state.loop_iterations() + 1;
        let seed = self.settings.seed;
        let model = self.train_model(rng::substream(seed, "fit", iteration as u64))?;
        let x = solve_ucb(
            &model,
            &self.space,
            &self.settings.ucb,
            rng::substream(seed, "acquisition", iteration as u64),
        )?;
        let level = select_fidelity(
            &model,
            &x,
            &self.state.cost_model,
            &self.settings.ucb,
            rng::substream(seed, "propagation", iteration as u64),
        )?;
        let e = match self.objective.evaluate(&x, level.index).and_then(check_evaluation) {
            Ok(e) => e,
            Err(err) => {
                let message = err.to_string();
                self.state.failure = Some(CampaignFailure {
                    iteration,
                    level: level.index,
                    x: x.clone(),
                    message: message.clone(),
                });
                return Err(Error::Objective {
                    x,
                    level: level.index,
                    message,
                });
            }
        };
        let rec = EvaluationRecord {
            x,
            level: level.index,
            y: e.value,
            cost: e.cost,
            iteration,
            phase: Phase::BoLoop,
        };
        self.state.cost_model.update(rec.level, rec.cost)?;
        self.state.absorb(rec.clone());
        on_record(&rec);
        Ok(rec)
    }

    /// Steps until the budget is spent. The evaluation that crosses the budget is kept.
    pub fn run_to_budget(&mut self, on_record: &mut dyn FnMut(&EvaluationRecord)) -> Result<()> {
        while !self.state.budget_exhausted() {
            self.step(on_record)?;
        }
        Ok(())
    }
}

/// Full campaign. Objective failures inside the loop halt the run and are
/// reported through `failure` on the returned state.
pub fn run(objective: &dyn MultiFidelityObjective, space: &DesignSpace, settings: &CampaignSettings) -> Result<CampaignState> {
    let mut campaign = Campaign::initialize(objective, space.clone(), settings.clone(), &mut |_| {})?;
    match campaign.run_to_budget(&mut |_| {}) {
        Ok(()) | Err(Error::Objective { .. }) => Ok(campaign.into_state()),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recommendation {
    pub observed_best: EvaluationRecord,
    pub model_best: Vec<f64>,
}

/// Best observed top-level record and the maximizer of the top-level posterior mean.
pub fn recommend(
    state: &CampaignState,
    model: &MfDeepGp,
    space: &DesignSpace,
    config: &UcbConfig,
    rng_seed: u64,
) -> Result<Recommendation> {
    let observed_best = state
        .incumbent
        .clone()
        .ok_or_else(|| Error::State("no highest-fidelity records yet".into()))?;
    let exploit = UcbConfig { beta: 0.0, ..*config };
    let model_best = solve_ucb(model, space, &exploit, rng_seed)?;
    Ok(Recommendation {
        observed_best,
        model_best,
    })
}

/// Plain GP-UCB at one fixed fidelity, used as a single-fidelity reference.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleFidelityResult {
    pub records: Vec<EvaluationRecord>,
    pub incumbent: EvaluationRecord,
    pub budget_spent: f64,
}

pub fn run_single_fidelity(
    objective: &dyn MultiFidelityObjective,
    space: &DesignSpace,
    level: usize,
    settings: &CampaignSettings,
) -> Result<SingleFidelityResult> {
    settings.validate()?;
    objective.ladder().level(level)?;
    let seed = settings.seed;
    let mut records = Vec::new();
    let mut spent = 0.0;
    let design = latin_hypercube(settings.n_initial, space.dim(), rng::substream(seed, "design", level as u64));
    for u in design {
        let x = space.from_unit(&u);
        let e = objective.evaluate(&x, level).and_then(check_evaluation)?;
        spent += e.cost;
        records.push(EvaluationRecord {
            x,
            level,
            y: e.value,
            cost: e.cost,
            iteration: 0,
            phase: Phase::InitialDesign,
        });
    }
    let mut iteration = 0;
    while spent < settings.budget_total {
        iteration += 1;
        let rows: Vec<Vec<f64>> = records.iter().map(|r| r.x.clone()).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.y).collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let noise = settings.model.relative_noise * if var > 0.0 { var } else { 1.0 };
        let data = GpDataset::from_rows(&rows, &ys, noise)?;
        let init = KernelSpec::new(
            settings.model.kernel,
            space.lower().iter().zip(space.upper()).map(|(l, u)| 0.5 * (u - l)).collect(),
            if var > 0.0 { var } else { 1.0 },
        )?;
        let opts = FitOptions::new(settings.model.restarts, rng::substream(seed, "fit", iteration)).centered();
        let gp = fit_with(data, &init, &opts)?;
        let root_beta = settings.ucb.beta.sqrt();
        let (x, _) = maximize_over(
            |x| {
                gp.predict_point(x)
                    .map(|(m, v)| m + root_beta * v.sqrt())
                    .unwrap_or(f64::NEG_INFINITY)
            },
            space,
            settings.ucb.pool_size,
            settings.ucb.restarts,
            rng::substream(rng::substream(seed, "acquisition", iteration), "pool", 0),
        );
        let e = objective.evaluate(&x, level).and_then(check_evaluation)?;
        spent += e.cost;
        records.push(EvaluationRecord {
            x,
            level,
            y: e.value,
            cost: e.cost,
            iteration: iteration as usize,
            phase: Phase::BoLoop,
        });
    }
    let incumbent = records
        .iter()
        .fold(None::<&EvaluationRecord>, |best, r| match best {
            Some(b) if b.y >= r.y => Some(b),
            _ => Some(r),
        })
        .cloned()
        .expect("at least one record");
    Ok(SingleFidelityResult {
        records,
        incumbent,
        budget_spent: spent,
    })
}
