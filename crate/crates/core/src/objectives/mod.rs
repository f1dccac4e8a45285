//! Multi-fidelity objectives and the name registry used by the CLI.

mod forrester;
mod reactor;
mod tis;

pub use forrester::{forrester_blend, forrester_family, forrester_high, forrester_low, Forrester};
pub use reactor::{
    geometry_to_peclet, reactor_proxy_simulate, simulate_rtd, PecletMap, ReactorGeometry, ReactorProxy,
    SimulatorSettings,
};
pub use tis::{
    fit_tanks_in_series, moment_estimate, synthetic_curve, tanks_in_series_e, trapezoid, PlugFlowMetric,
    RtdCurve,
};

use crate::bo::DesignSpace;
use crate::error::{Error, Result};
use crate::fidelity::FidelityLadder;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub cost: f64,
}

/// A simulator with discrete fidelities. `evaluate` must be a pure function
/// of `(x, level)` and the objective's own seed, and report a positive cost.
pub trait MultiFidelityObjective: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn ladder(&self) -> &FidelityLadder;
    /// Default design box.
    fn design_space(&self) -> DesignSpace;
    /// `level` is 1-based.
    fn evaluate(&self, x: &[f64], level: usize) -> Result<Evaluation>;
    fn known_optimum(&self) -> Option<(Vec<f64>, f64)> {
        None
    }
}

pub const OBJECTIVE_NAMES: [&str; 2] = ["forrester5", "reactor-proxy"];

/// Looks up an objective by registry name.
pub fn objective_by_name(name: &str, seed: u64) -> Result<Box<dyn MultiFidelityObjective>> {
    match name {
        "forrester5" => Ok(Box::new(Forrester::default())),
        "reactor-proxy" => Ok(Box::new(ReactorProxy::new(seed))),
        other => Err(Error::Input(format!(
            "unknown objective {other:?}; known: {}",
            OBJECTIVE_NAMES.join(", ")
        ))),
    }
}
