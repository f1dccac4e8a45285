//! Cost-aware multi-fidelity Bayesian optimization.

mod acquisition;
mod campaign;
mod cost;
mod space;

pub use acquisition::{acquisition_draws, choose_level, maximize_over, select_fidelity, solve_ucb, ucb_value, UcbConfig};
pub use campaign::{
    initial_design, recommend, run, run_single_fidelity, Campaign, CampaignFailure, CampaignSettings, CampaignState,
    EvaluationRecord, ModelSettings, Phase, Recommendation, SingleFidelityResult, LEDGER_TOL,
};
pub use cost::{update_costs, CostModel};
pub use space::DesignSpace;
