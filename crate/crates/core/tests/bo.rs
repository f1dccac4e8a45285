mod common;

use common::{correlated_toy, forrester_data, two_level_ladder, FORRESTER_F_STAR};
use mfdgp::bo::{
    acquisition_draws, choose_level, initial_design, recommend, run, select_fidelity, solve_ucb, ucb_value,
    update_costs, Campaign, CampaignSettings, CampaignState, CostModel, DesignSpace, Phase, UcbConfig, LEDGER_TOL,
};
use mfdgp::dgp::{train, TrainConfig};
use mfdgp::fidelity::FidelityLadder;
use mfdgp::objectives::{Evaluation, Forrester, MultiFidelityObjective};
use mfdgp::Error;
use proptest::prelude::*;

const TAU: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

fn unit() -> DesignSpace {
    DesignSpace::new(vec![0.0], vec![1.0]).unwrap()
}

fn small_ucb(beta: f64) -> UcbConfig {
    UcbConfig {
        beta,
        restarts: 4,
        pool_size: 64,
    }
}

#[test]
fn initial_design_counts_and_costs() {
    let f = Forrester::default();
    let state = initial_design(&f, &unit(), 4, 1000.0, 3).unwrap();
    assert_eq!(state.records.len(), 20);
    assert_eq!(state.per_level_counts(), vec![4; 5]);
    assert_eq!(state.cost_model.tau(), &TAU);
    assert_eq!(state.budget_spent, 4.0 * 31.0);
    assert!(state.records.iter().all(|r| r.phase == Phase::InitialDesign && r.iteration == 0));
    let again = initial_design(&f, &unit(), 4, 1000.0, 3).unwrap();
    assert_eq!(state.records, again.records);
    let other = initial_design(&f, &unit(), 4, 1000.0, 4).unwrap();
    assert_ne!(state.records, other.records);
}

#[test]
fn cost_updates() {
    let c = CostModel::from_initial(&[vec![2.0], vec![5.0]]).unwrap();
    let next = update_costs(&c, 1, 4.0).unwrap();
    assert_eq!(next.tau(), &[3.0, 5.0]);
    let mut fixed = c.clone();
    for _ in 0..9 {
        fixed.update(2, 5.0).unwrap();
    }
    assert_eq!(fixed.tau()[1], 5.0);
    assert!(update_costs(&c, 3, 1.0).is_err());
    assert!(update_costs(&c, 1, 0.0).is_err());
    assert_eq!(c.gammas(), vec![2.5, 1.0]);
}

#[test]
fn forced_fidelity_choices() {
    assert_eq!(choose_level(&[0.2; 5], &TAU, 2.0), 1);
    assert_eq!(choose_level(&[0.1, 0.1, 0.1, 0.1, 0.4], &TAU, 2.0), 1);
    assert_eq!(choose_level(&[0.0, 0.0, 0.0, 0.0, 0.3], &[4.0; 5], 2.0), 5);
}

#[test]
fn zero_beta_selects_highest_level() {
    assert_eq!(choose_level(&[0.9, 0.5, 0.2, 0.1, 0.0], &TAU, 0.0), 5);
}

#[test]
fn select_fidelity_uses_model_sigmas() {
    let model = train(&forrester_data(3, 1), &FidelityLadder::five_level(), &TrainConfig::default()).unwrap();
    let cost = CostModel::from_initial(&TAU.map(|t| vec![t])).unwrap();
    let cfg = small_ucb(2.0);
    let level = select_fidelity(&model, &[0.4], &cost, &cfg, 5).unwrap();
    let sigmas: Vec<f64> = model.predict_all_levels(&[0.4], 5).unwrap().iter().map(|p| p.1).collect();
    assert_eq!(level.index, choose_level(&sigmas, &TAU, 2.0));
    assert_eq!(level.nominal, FidelityLadder::five_level().nominals()[level.index - 1]);
    let short = CostModel::from_initial(&[vec![1.0], vec![2.0]]).unwrap();
    assert!(matches!(select_fidelity(&model, &[0.4], &short, &cfg, 5), Err(Error::Shape(_))));
}

#[test]
fn zero_beta_ucb_maximizes_the_mean() {
    let model = train(&correlated_toy(), &two_level_ladder(), &TrainConfig::default()).unwrap();
    let cfg = small_ucb(0.0);
    let x = solve_ucb(&model, &unit(), &cfg, 9).unwrap();
    let draws = acquisition_draws(&model, 9);
    let at = ucb_value(&model, &x, 0.0, &draws).unwrap();
    let grid_best = (0..=1000)
        .map(|i| ucb_value(&model, &[i as f64 / 1000.0], 0.0, &draws).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(at >= grid_best - 1e-6, "{at} < {grid_best}");
}

#[test]
fn ucb_matches_grid_oracle() {
    let model = train(&correlated_toy(), &two_level_ladder(), &TrainConfig::default()).unwrap();
    let cfg = UcbConfig::default();
    let x = solve_ucb(&model, &unit(), &cfg, 4).unwrap();
    let draws = acquisition_draws(&model, 4);
    let at = ucb_value(&model, &x, cfg.beta, &draws).unwrap();
    let grid_best = (0..10_000)
        .map(|i| ucb_value(&model, &[i as f64 / 9999.0], cfg.beta, &draws).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((at - grid_best).abs() <= 1e-3 || at > grid_best, "{at} vs {grid_best}");
}

#[test]
fn near_degenerate_box_stays_feasible() {
    let model = train(&correlated_toy(), &two_level_ladder(), &TrainConfig::default()).unwrap();
    let space = DesignSpace::new(vec![0.3 - 1e-9], vec![0.3]).unwrap();
    let x = solve_ucb(&model, &space, &small_ucb(2.0), 1).unwrap();
    assert!(space.contains(&x), "{x:?}");
}

#[test]
fn budget_equal_to_initial_cost_stops_before_the_loop() {
    let state = run(&Forrester::default(), &unit(), &CampaignSettings::new(2, 62.0, 1)).unwrap();
    assert_eq!(state.records.len(), 10);
    assert_eq!(state.loop_iterations(), 0);
    state.check_ledger().unwrap();
}

fn quick(n: usize, budget: f64, seed: u64) -> CampaignSettings {
    let mut s = CampaignSettings::new(n, budget, seed);
    s.ucb = small_ucb(2.0);
    s
}

#[test]
fn campaign_ledger_and_determinism() {
    let f = Forrester::default();
    let a = run(&f, &unit(), &quick(1, 45.0, 11)).unwrap();
    let b = run(&f, &unit(), &quick(1, 45.0, 11)).unwrap();
    assert_eq!(a.records, b.records);
    assert!(a.loop_iterations() > 0);
    a.check_ledger().unwrap();
    let summed: f64 = a.records.iter().map(|r| r.cost).sum();
    assert!((a.budget_spent - summed).abs() <= LEDGER_TOL);
    let last = a.records.last().unwrap();
    assert!(a.budget_spent - a.budget_total < last.cost);
    assert!(a.budget_spent - last.cost < a.budget_total);
    assert!(a.records.iter().all(|r| unit().contains(&r.x)));
    let top = a.records.iter().filter(|r| r.level == 5).map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.incumbent.as_ref().unwrap().y, top);
}

#[test]
fn replay_reconstructs_state() {
    let f = Forrester::default();
    let live = run(&f, &unit(), &quick(1, 40.0, 2)).unwrap();
    let back = CampaignState::replay(live.records.clone(), 5, live.budget_total, live.rng_seed).unwrap();
    assert_eq!(back, live);
}

#[test]
fn extended_budget_splices_into_a_longer_run() {
    let f = Forrester::default();
    let mut c = Campaign::initialize(&f, unit(), quick(1, 40.0, 6), &mut |_| {}).unwrap();
    c.run_to_budget(&mut |_| {}).unwrap();
    c.extend_budget(15.0);
    c.run_to_budget(&mut |_| {}).unwrap();
    let whole = run(&f, &unit(), &quick(1, 55.0, 6)).unwrap();
    assert_eq!(c.state().records, whole.records);
}

#[test]
fn recommendation_rules() {
    let f = Forrester::default();
    let state = initial_design(&f, &unit(), 1, 31.0, 5).unwrap();
    let top: Vec<_> = state.records.iter().filter(|r| r.level == 5).cloned().collect();
    assert_eq!(top.len(), 1);
    let model = train(&state.dataset(1).unwrap(), f.ladder(), &TrainConfig::default()).unwrap();
    let cfg = small_ucb(2.0);
    let rec = recommend(&state, &model, &unit(), &cfg, 3).unwrap();
    assert_eq!(rec.observed_best, top[0]);
    assert!(rec.observed_best.y <= FORRESTER_F_STAR);
    let exploit = UcbConfig { beta: 0.0, ..cfg };
    assert_eq!(rec.model_best, solve_ucb(&model, &unit(), &exploit, 3).unwrap());
}

#[test]
fn correlated_toy_recommendation_is_bounded() {
    let model = train(&correlated_toy(), &two_level_ladder(), &TrainConfig::default()).unwrap();
    let data = correlated_toy();
    let mut records = Vec::new();
    for (t, level) in data.levels().iter().enumerate() {
        for (x, y) in level.inputs.iter().zip(&level.targets) {
            records.push(mfdgp::bo::EvaluationRecord {
                x: x.clone(),
                level: t + 1,
                y: *y,
                cost: 1.0,
                iteration: 0,
                phase: Phase::InitialDesign,
            });
        }
    }
    let state = CampaignState::replay(records, 2, 100.0, 0).unwrap();
    let rec = recommend(&state, &model, &unit(), &small_ucb(2.0), 0).unwrap();
    let true_max = (0..10_000)
        .map(|i| {
            let x = i as f64 / 9999.0;
            (6.0 * x).sin() + 0.5 * x
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(rec.observed_best.y <= true_max);
}

/// Succeeds for the initial design, then fails on the first loop evaluation.
struct Flaky {
    calls: std::sync::atomic::AtomicUsize,
    ladder: FidelityLadder,
}

impl MultiFidelityObjective for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }
    fn dimension(&self) -> usize {
        1
    }
    fn ladder(&self) -> &FidelityLadder {
        &self.ladder
    }
    fn design_space(&self) -> DesignSpace {
        unit()
    }
    fn evaluate(&self, x: &[f64], level: usize) -> mfdgp::Result<Evaluation> {
        if self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= 5 {
            return Err(Error::SimulationDiverged("solver blew up".into()));
        }
        mfdgp::objectives::forrester_family(x, level)
    }
}

#[test]
fn loop_failure_keeps_partial_results() {
    let f = Flaky {
        calls: 0.into(),
        ladder: FidelityLadder::five_level(),
    };
    let s = run(&f, &unit(), &quick(1, 200.0, 3)).unwrap();
    let failure = s.failure.as_ref().expect("failure recorded");
    assert_eq!(failure.iteration, 1);
    assert!(failure.message.contains("solver blew up"));
    assert_eq!(s.records.len(), 5);
    s.check_ledger().unwrap();
}

#[test]
fn initial_design_failure_is_an_error() {
    let f = Flaky {
        calls: 3.into(),
        ladder: FidelityLadder::five_level(),
    };
    assert!(matches!(run(&f, &unit(), &quick(1, 200.0, 3)), Err(Error::CampaignInit { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn choice_invariant_under_tau_scaling(
        sigmas in prop::collection::vec(0.0f64..2.0, 5),
        tau in prop::collection::vec(0.1f64..50.0, 5),
        k in 0.01f64..100.0,
    ) {
        let scaled: Vec<f64> = tau.iter().map(|t| t * k).collect();
        prop_assert_eq!(choose_level(&sigmas, &tau, 2.0), choose_level(&sigmas, &scaled, 2.0));
    }

    #[test]
    fn choice_invariant_under_beta_scaling(
        sigmas in prop::collection::vec(0.0f64..2.0, 5),
        tau in prop::collection::vec(0.1f64..50.0, 5),
        beta in 0.01f64..10.0,
        k in 0.01f64..100.0,
    ) {
        prop_assert_eq!(choose_level(&sigmas, &tau, beta), choose_level(&sigmas, &tau, beta * k));
    }
}
