//! Coiled-tube reactor proxy.
//!
//! Geometry is mapped to a Peclet number through a smooth surrogate, then a
//! tracer pulse is pushed through the 1D axial-dispersion model
//!
//! ```text
//! dc/dtheta = (1/Pe) d2c/dz2 - dc/dz,   z in [0, 1]
//! ```
//!
//! with closed (Danckwerts) boundaries, on a grid whose cell count is set by
//! the fidelity level. The outlet history is normalized to an RTD and scored
//! by its tanks-in-series `N`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::tis::{fit_tanks_in_series, PlugFlowMetric, RtdCurve};
use super::{Evaluation, MultiFidelityObjective};
use crate::bo::DesignSpace;
use crate::error::{Error, Result};
use crate::fidelity::FidelityLadder;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactorGeometry {
    /// mm
    pub coil_radius: f64,
    /// mm
    pub tube_radius: f64,
    /// mm
    pub pitch: f64,
    pub inversion_fraction: f64,
    /// mL
    pub total_volume: f64,
}

impl Default for ReactorGeometry {
    fn default() -> Self {
        Self {
            coil_radius: 12.5,
            tube_radius: 2.5,
            pitch: 10.0,
            inversion_fraction: 0.0,
            total_volume: 20.0,
        }
    }
}

impl ReactorGeometry {
    pub fn validate(&self) -> Result<()> {
        let lengths = [self.coil_radius, self.tube_radius, self.pitch, self.total_volume];
        if lengths.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Input(format!("geometry lengths and volume must be positive: {self:?}")));
        }
        if self.tube_radius >= self.coil_radius {
            return Err(Error::Input(format!(
                "tube radius {} must be smaller than coil radius {}",
                self.tube_radius, self.coil_radius
            )));
        }
        if !(0.0..=1.0).contains(&self.inversion_fraction) {
            return Err(Error::Input(format!(
                "inversion fraction {} outside [0, 1]",
                self.inversion_fraction
            )));
        }
        Ok(())
    }

    /// Geometry from a design vector `(coil_radius, tube_radius, pitch, inversion_fraction)`.
    pub fn from_design(x: &[f64], total_volume: f64) -> Result<Self> {
        if x.len() != 4 {
            return Err(Error::Shape(format!("reactor design vector needs 4 entries, got {}", x.len())));
        }
        let g = Self {
            coil_radius: x[0],
            tube_radius: x[1],
            pitch: x[2],
            inversion_fraction: x[3],
            total_volume,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Coefficients of `Pe = kappa (Rc/Rt)^a (Rt/p)^b (1 + c s (1 - s))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PecletMap {
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for PecletMap {
    fn default() -> Self {
        Self {
            kappa: 40.0,
            a: 0.8,
            b: 0.4,
            c: 1.0,
        }
    }
}

impl PecletMap {
    pub fn peclet(&self, g: &ReactorGeometry) -> Result<f64> {
        g.validate()?;
        let s = g.inversion_fraction;
        Ok(self.kappa
            * (g.coil_radius / g.tube_radius).powf(self.a)
            * (g.tube_radius / g.pitch).powf(self.b)
            * (1.0 + self.c * s * (1.0 - s)))
    }
}

pub fn geometry_to_peclet(geom: &ReactorGeometry) -> Result<f64> {
    PecletMap::default().peclet(geom)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatorSettings {
    pub cells_per_level: Vec<usize>,
    pub base_costs: Vec<f64>,
    /// Log-normal sigma of the per-evaluation cost multiplier.
    pub cost_sigma: f64,
    /// Time-width of the Gaussian inlet pulse.
    pub pulse_width: f64,
    /// Simulated span after the pulse centre.
    pub theta_end: f64,
}

impl Default for SimulatorSettings {
    fn default() -> Self {
        Self {
            cells_per_level: vec![20, 40, 80, 160, 320],
            base_costs: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            cost_sigma: 0.2,
            pulse_width: 0.01,
            theta_end: 3.0,
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Explicit finite-volume solve of the axial-dispersion model on `cells`
/// cells; returns the normalized outlet response.
///
/// Upwind advection and central diffusion with
/// `dtheta = min(0.5 dz, 0.25 Pe dz^2)`, so the Courant number stays at or
/// below 0.5 and every update is a convex combination of old cell values.
pub fn simulate_rtd(peclet: f64, cells: usize, pulse_width: f64, theta_end: f64) -> Result<RtdCurve> {
    if !(peclet.is_finite() && peclet > 0.0) {
        return Err(Error::Input(format!("Peclet number must be positive, got {peclet}")));
    }
    if cells < 2 {
        return Err(Error::Input("simulation needs at least two cells".into()));
    }
    let dz = 1.0 / cells as f64;
    let dispersion = 1.0 / peclet;
    let dtheta = (0.5 * dz).min(0.25 * peclet * dz * dz);
    let lead = (4.0 * pulse_width / dtheta).ceil() as usize;
    let center = lead as f64 * dtheta;
    let steps = lead + (theta_end / dtheta).ceil() as usize;

    let mut c = vec![0.0; cells];
    let mut flux = vec![0.0; cells + 1];
    let mut theta = Vec::with_capacity(steps - lead + 1);
    let mut outlet = Vec::with_capacity(steps - lead + 1);
    if lead == 0 {
        theta.push(0.0);
        outlet.push(0.0);
    }
    let ratio = dtheta / dz;
    for k in 0..steps {
        let t0 = k as f64 * dtheta;
        let t1 = t0 + dtheta;
        let fed = normal_cdf((t1 - center) / pulse_width) - normal_cdf((t0 - center) / pulse_width);
        flux[0] = fed / dtheta;
        for i in 0..cells - 1 {
            flux[i + 1] = c[i] - dispersion * (c[i + 1] - c[i]) / dz;
        }
        flux[cells] = c[cells - 1];
        for i in 0..cells {
            c[i] += ratio * (flux[i] - flux[i + 1]);
        }
        if k + 1 >= lead {
            let out = c[cells - 1];
            if !out.is_finite() {
                return Err(Error::SimulationDiverged(format!(
                    "non-finite outlet concentration at step {k} (Pe = {peclet}, cells = {cells})"
                )));
            }
            theta.push((k + 1 - lead) as f64 * dtheta);
            outlet.push(out.max(0.0));
        }
    }
    RtdCurve::normalized(theta, outlet)
}

/// Tracer simulation of a coiled-tube reactor at a fidelity level, with a
/// stochastic but seeded evaluation cost.
#[derive(Clone, Debug)]
pub struct ReactorProxy {
    pub settings: SimulatorSettings,
    pub peclet_map: PecletMap,
    pub total_volume: f64,
    pub seed: u64,
    ladder: FidelityLadder,
    space: DesignSpace,
}

impl ReactorProxy {
    pub fn new(seed: u64) -> Self {
        Self {
            settings: SimulatorSettings::default(),
            peclet_map: PecletMap::default(),
            total_volume: 20.0,
            seed,
            ladder: FidelityLadder::five_level(),
            space: Self::default_space(),
        }
    }

    /// Replaces the fidelity nominals; the level count must match the cell ladder.
    pub fn with_ladder(mut self, ladder: FidelityLadder) -> Result<Self> {
        if ladder.len() != self.settings.cells_per_level.len() {
            return Err(Error::Input(format!(
                "reactor-proxy has {} mesh levels, ladder has {}",
                self.settings.cells_per_level.len(),
                ladder.len()
            )));
        }
        self.ladder = ladder;
        Ok(self)
    }

    /// Overrides the per-level base costs.
    pub fn with_base_costs(mut self, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != self.ladder.len() || costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Input(format!(
                "need {} positive base costs, got {costs:?}",
                self.ladder.len()
            )));
        }
        self.settings.base_costs = costs;
        Ok(self)
    }

    /// Coil radius [5, 20] mm, tube radius [1.5, 4] mm, pitch [4, 15] mm, inversion [0, 1].
    pub fn default_space() -> DesignSpace {
        DesignSpace::new(vec![5.0, 1.5, 4.0, 0.0], vec![20.0, 4.0, 15.0, 1.0])
            .expect("static reactor design box is valid")
    }

    pub fn cells(&self, level: usize) -> Result<usize> {
        self.ladder.level(level)?;
        Ok(self.settings.cells_per_level[level - 1])
    }

    /// Cost multiplier `exp(sigma z)`, seeded by `(seed, x, level)`.
    fn cost_multiplier(&self, x: &[f64], level: usize) -> f64 {
        let stream = rng::substream(self.seed ^ rng::hash_point(x), "cost", level as u64);
        let mut r = rng::rng(stream);
        let z: f64 = StandardNormal.sample(&mut r);
        (self.settings.cost_sigma * z).exp()
    }

    pub fn simulate(&self, geom: &ReactorGeometry, level: usize) -> Result<(RtdCurve, f64)> {
        let cells = self.cells(level)?;
        let pe = self.peclet_map.peclet(geom)?;
        let curve = simulate_rtd(pe, cells, self.settings.pulse_width, self.settings.theta_end)?;
        let key = [
            geom.coil_radius,
            geom.tube_radius,
            geom.pitch,
            geom.inversion_fraction,
            geom.total_volume,
        ];
        let cost = self.settings.base_costs[level - 1] * self.cost_multiplier(&key, level);
        Ok((curve, cost))
    }

    pub fn plug_flow(&self, geom: &ReactorGeometry, level: usize) -> Result<(PlugFlowMetric, f64)> {
        let (curve, cost) = self.simulate(geom, level)?;
        Ok((fit_tanks_in_series(&curve)?, cost))
    }
}

/// Simulates one geometry at one fidelity level of the default proxy.
pub fn reactor_proxy_simulate(geom: &ReactorGeometry, level: usize, seed: u64) -> Result<(RtdCurve, f64)> {
    ReactorProxy::new(seed).simulate(geom, level)
}

impl MultiFidelityObjective for ReactorProxy {
    fn name(&self) -> &str {
        "reactor-proxy"
    }

    fn dimension(&self) -> usize {
        4
    }

    fn ladder(&self) -> &FidelityLadder {
        &self.ladder
    }

    fn design_space(&self) -> DesignSpace {
        self.space.clone()
    }

    fn evaluate(&self, x: &[f64], level: usize) -> Result<Evaluation> {
        let geom = ReactorGeometry::from_design(x, self.total_volume)?;
        let (metric, cost) = self.plug_flow(&geom, level)?;
        Ok(Evaluation {
            value: metric.n_tanks,
            cost,
        })
    }
}
