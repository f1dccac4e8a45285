//! Python bindings for `mfdgp`.
//!
//! Matrices cross the boundary as lists of rows (`list[list[float]]`).
//! Library errors surface as `ValueError`, I/O problems as `OSError`.

use std::path::PathBuf;

use mfdgp::bo::{self, CampaignSettings, EvaluationRecord, Phase, UcbConfig};
use mfdgp::dgp::{self, LevelObservations, MfDeepGp, MultiFidelityDataset, TrainConfig};
use mfdgp::fidelity::FidelityLadder;
use mfdgp::gp::{self, FitOptions, GpDataset, KernelKind, KernelSpec, TrainedGp};
use mfdgp::objectives::{self, MultiFidelityObjective, ReactorGeometry, RtdCurve};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: mfdgp::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kernel_kind(name: &str) -> PyResult<KernelKind> {
    match name {
        "squared-exponential" | "se" => Ok(KernelKind::SquaredExponential),
        "matern-5/2" | "matern52" => Ok(KernelKind::Matern52),
        other => Err(PyValueError::new_err(format!(
            "unknown kernel {other:?}; use \"squared-exponential\" or \"matern-5/2\""
        ))),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn input_ranges(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| {
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[j]), b.max(r[j])));
            if hi > lo {
                0.5 * (hi - lo)
            } else {
                1.0
            }
        })
        .collect()
}

/// Exact Gaussian-process posterior with fixed or fitted hyperparameters.
#[pyclass(name = "GaussianProcess", module = "pymfdgp", frozen)]
struct PyGp {
    inner: TrainedGp,
}

#[pymethods]
impl PyGp {
    /// Fits lengthscales and signal variance by maximum likelihood.
    #[staticmethod]
    #[pyo3(signature = (inputs, targets, noise_variance=1e-6, kernel="squared-exponential", restarts=3, seed=0, center=false))]
    fn fit(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        noise_variance: f64,
        kernel: &str,
        restarts: usize,
        seed: u64,
        center: bool,
    ) -> PyResult<Self> {
        let data = GpDataset::from_rows(&inputs, &targets, noise_variance).map_err(value_err)?;
        let init = KernelSpec::new(kernel_kind(kernel)?, input_ranges(&inputs), 1.0).map_err(value_err)?;
        let mut opts = FitOptions::new(restarts, seed);
        if center {
            opts = opts.centered();
        }
        let inner = gp::fit_with(data, &init, &opts).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Conditions on data with the given hyperparameters.
    #[staticmethod]
    #[pyo3(signature = (inputs, targets, lengthscales, signal_variance, noise_variance=0.0, kernel="squared-exponential", prior_mean=0.0))]
    fn condition(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        lengthscales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
        kernel: &str,
        prior_mean: f64,
    ) -> PyResult<Self> {
        let data = GpDataset::from_rows(&inputs, &targets, noise_variance).map_err(value_err)?;
        let spec = KernelSpec::new(kernel_kind(kernel)?, lengthscales, signal_variance).map_err(value_err)?;
        let inner = TrainedGp::condition(data, spec, prior_mean).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// `(means, variances)` at each query row.
    fn predict(&self, queries: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (m, v) = self.inner.predict(&matrix(&queries)?).map_err(value_err)?;
        Ok((m.iter().copied().collect(), v.iter().copied().collect()))
    }

    /// `count` joint posterior draws; one list per draw.
    #[pyo3(signature = (queries, count, seed=0))]
    fn sample_posterior(&self, queries: Vec<Vec<f64>>, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let s = self
            .inner
            .sample_posterior(&matrix(&queries)?, count, seed)
            .map_err(value_err)?;
        Ok((0..s.nrows()).map(|i| s.row(i).iter().copied().collect()).collect())
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }

    #[getter]
    fn lengthscales(&self) -> Vec<f64> {
        self.inner.kernel().lengthscales.clone()
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.inner.kernel().signal_variance
    }

    #[getter]
    fn jitter(&self) -> f64 {
        self.inner.jitter()
    }

    fn __repr__(&self) -> String {
        let k = self.inner.kernel();
        format!(
            "GaussianProcess(n={}, lengthscales={:?}, signal_variance={})",
            self.inner.dataset().len(),
            k.lengthscales,
            k.signal_variance
        )
    }
}

/// Multi-fidelity deep GP: one layer per fidelity level.
#[pyclass(name = "DeepGp", module = "pymfdgp", frozen)]
struct PyDeepGp {
    inner: MfDeepGp,
}

#[pymethods]
impl PyDeepGp {
    /// `levels` holds one `(inputs, targets)` pair per fidelity, lowest first.
    #[staticmethod]
    #[pyo3(signature = (levels, fidelities=None, kernel="squared-exponential", restarts=3, seed=0, relative_noise=1e-6, propagation_samples=100))]
    fn train(
        levels: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
        fidelities: Option<Vec<f64>>,
        kernel: &str,
        restarts: usize,
        seed: u64,
        relative_noise: f64,
        propagation_samples: usize,
    ) -> PyResult<Self> {
        let dim = levels
            .first()
            .and_then(|(x, _)| x.first())
            .map(Vec::len)
            .ok_or_else(|| PyValueError::new_err("the lowest level needs at least one observation"))?;
        let t = levels.len();
        let obs = levels
            .into_iter()
            .map(|(inputs, targets)| LevelObservations { inputs, targets })
            .collect();
        let data = MultiFidelityDataset::new(dim, obs).map_err(value_err)?;
        let ladder = match fidelities {
            Some(f) => FidelityLadder::new(f),
            None => FidelityLadder::new((0..t).map(|i| i as f64 / (t - 1) as f64).collect()),
        }
        .map_err(value_err)?;
        let config = TrainConfig {
            kernel: kernel_kind(kernel)?,
            restarts,
            seed,
            relative_noise,
            propagation_samples,
        };
        let inner = dgp::train(&data, &ladder, &config).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: MfDeepGp::load(&path).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    /// `(mu, sigma)` at a 1-based level.
    #[pyo3(signature = (x, level, seed=0))]
    fn predict_level(&self, x: Vec<f64>, level: usize, seed: u64) -> PyResult<(f64, f64)> {
        self.inner.predict_level(&x, level, seed).map_err(value_err)
    }

    /// `(mu, sigma)` for every level from one propagation pass.
    #[pyo3(signature = (x, seed=0))]
    fn predict_all_levels(&self, x: Vec<f64>, seed: u64) -> PyResult<Vec<(f64, f64)>> {
        self.inner.predict_all_levels(&x, seed).map_err(value_err)
    }

    /// Per-sample `(means, variances)` retained from propagation to `level`.
    #[pyo3(signature = (x, level, seed=0))]
    fn predict_level_samples(&self, x: Vec<f64>, level: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let s = self.inner.predict_level_samples(&x, level, seed).map_err(value_err)?;
        Ok((s.means, s.variances))
    }

    fn with_propagation_samples(&self, samples: usize) -> Self {
        Self {
            inner: self.inner.clone().with_propagation_samples(samples),
        }
    }

    #[getter]
    fn num_levels(&self) -> usize {
        self.inner.num_levels()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("DeepGp(levels={}, dim={})", self.inner.num_levels(), self.inner.dim())
    }
}

/// Value and cost of the 5-level Forrester family (maximization form).
#[pyfunction]
fn forrester(x: f64, level: usize) -> PyResult<(f64, f64)> {
    let e = objectives::forrester_family(&[x], level).map_err(value_err)?;
    Ok((e.value, e.cost))
}

/// Tracer response of the reactor proxy: `(theta, e_theta, cost)`.
/// `geometry` is `(coil_radius, tube_radius, pitch, inversion_fraction)`.
#[pyfunction]
#[pyo3(signature = (geometry, level, seed=0))]
fn reactor_simulate(geometry: Vec<f64>, level: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let g = ReactorGeometry::from_design(&geometry, ReactorGeometry::default().total_volume).map_err(value_err)?;
    let (curve, cost) = objectives::reactor_proxy_simulate(&g, level, seed).map_err(value_err)?;
    Ok((curve.theta().to_vec(), curve.e_theta().to_vec(), cost))
}

/// Least-squares tanks-in-series fit: `(n_tanks, residual)`.
#[pyfunction]
fn fit_tanks_in_series(theta: Vec<f64>, e_theta: Vec<f64>) -> PyResult<(f64, f64)> {
    let curve = RtdCurve::new(theta, e_theta).map_err(value_err)?;
    let m = objectives::fit_tanks_in_series(&curve).map_err(value_err)?;
    Ok((m.n_tanks, m.fit_residual))
}

/// Tanks-in-series density `E(theta)` for real `n`.
#[pyfunction]
fn tanks_in_series(n: f64, theta: f64) -> f64 {
    objectives::tanks_in_series_e(n, theta)
}

/// Cost-weighted fidelity choice (1-based); ties go to the higher level.
#[pyfunction]
#[pyo3(signature = (sigmas, tau, beta=2.0))]
fn choose_level(sigmas: Vec<f64>, tau: Vec<f64>, beta: f64) -> PyResult<usize> {
    if sigmas.len() != tau.len() || sigmas.is_empty() {
        return Err(PyValueError::new_err("sigmas and tau need equal, non-zero length"));
    }
    Ok(bo::choose_level(&sigmas, &tau, beta))
}

/// Fidelity a trained model would pick at `x` under running mean costs `tau`.
#[pyfunction]
#[pyo3(signature = (model, x, tau, beta=2.0, seed=0))]
fn select_fidelity(model: &PyDeepGp, x: Vec<f64>, tau: Vec<f64>, beta: f64, seed: u64) -> PyResult<usize> {
    let cost = bo::CostModel::from_initial(&tau.iter().map(|t| vec![*t]).collect::<Vec<_>>()).map_err(value_err)?;
    let config = UcbConfig {
        beta,
        ..UcbConfig::default()
    };
    Ok(bo::select_fidelity(&model.inner, &x, &cost, &config, seed)
        .map_err(value_err)?
        .index)
}

fn record_dict<'py>(py: Python<'py>, r: &EvaluationRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x", r.x.clone())?;
    d.set_item("level", r.level)?;
    d.set_item("y", r.y)?;
    d.set_item("cost", r.cost)?;
    d.set_item("iteration", r.iteration)?;
    d.set_item(
        "phase",
        match r.phase {
            Phase::InitialDesign => "initial-design",
            Phase::BoLoop => "bo-loop",
        },
    )?;
    Ok(d)
}

/// Runs a full campaign on a registered objective and returns its ledger as a dict.
#[pyfunction]
#[pyo3(signature = (objective="forrester5", n_initial=1, budget=40.0, seed=7, beta=2.0, pool_size=512, restarts=8))]
#[allow(clippy::too_many_arguments)]
fn run_campaign<'py>(
    py: Python<'py>,
    objective: &str,
    n_initial: usize,
    budget: f64,
    seed: u64,
    beta: f64,
    pool_size: usize,
    restarts: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let obj: Box<dyn MultiFidelityObjective> = objectives::objective_by_name(objective, seed).map_err(value_err)?;
    let mut settings = CampaignSettings::new(n_initial, budget, seed);
    settings.ucb = UcbConfig {
        beta,
        restarts,
        pool_size,
    };
    let space = obj.design_space();
    let state = py
        .detach(|| bo::run(obj.as_ref(), &space, &settings))
        .map_err(value_err)?;
    let out = PyDict::new(py);
    let records = state
        .records
        .iter()
        .map(|r| record_dict(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("records", records)?;
    out.set_item("budget_total", state.budget_total)?;
    out.set_item("budget_spent", state.budget_spent)?;
    out.set_item("per_level_counts", state.per_level_counts())?;
    out.set_item("tau", state.cost_model.tau().to_vec())?;
    match &state.incumbent {
        Some(r) => out.set_item("incumbent", record_dict(py, r)?)?,
        None => out.set_item("incumbent", py.None())?,
    }
    out.set_item("failure", state.failure.as_ref().map(|f| f.message.clone()))?;
    Ok(out)
}

#[pymodule]
fn pymfdgp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGp>()?;
    m.add_class::<PyDeepGp>()?;
    m.add_function(wrap_pyfunction!(forrester, m)?)?;
    m.add_function(wrap_pyfunction!(reactor_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_tanks_in_series, m)?)?;
    m.add_function(wrap_pyfunction!(tanks_in_series, m)?)?;
    m.add_function(wrap_pyfunction!(choose_level, m)?)?;
    m.add_function(wrap_pyfunction!(select_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
