use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use crate::error::{Error, Result};
use crate::rng;

const JITTER_START: f64 = 1e-10;
const JITTER_STOP: f64 = 1e-4;
const VARIANCE_CLAMP: f64 = -1e-10;

/// Observations for a single GP: `n x d` inputs, `n` targets and a fixed
/// Gaussian noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct GpDataset {
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    noise_variance: f64,
}

impl GpDataset {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>, noise_variance: f64) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.ncols() == 0 {
            return Err(Error::Input("dataset needs at least one observation and one input dimension".into()));
        }
        if inputs.nrows() != targets.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite values".into()));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::Input(format!("noise variance must be >= 0, got {noise_variance}")));
        }
        Ok(Self {
            inputs,
            targets,
            noise_variance,
        })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64], noise_variance: f64) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged input rows".into()));
        }
        let inputs = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(inputs, DVector::from_column_slice(targets), noise_variance)
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    pub(crate) fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }
}

/// Prior mean of a GP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanFunction {
    Constant(f64),
    /// The last input coordinate, i.e. identity in an augmented input.
    LastInput,
}

impl MeanFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::LastInput => x.last().copied().unwrap_or(0.0),
        }
    }
}

impl From<f64> for MeanFunction {
    fn from(c: f64) -> Self {
        Self::Constant(c)
    }
}

/// Exact GP posterior with a cached Cholesky factor of `K + (noise + jitter) I`.
///
/// `fit` uses a zero prior mean unless target centring or another mean
/// function is requested.
#[derive(Clone, Debug)]
pub struct TrainedGp {
    dataset: GpDataset,
    kernel: KernelSpec,
    prior_mean: MeanFunction,
    jitter: f64,
    rows: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
}

pub(crate) fn gram(kernel: &KernelSpec, rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval_unchecked(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factors `a + jitter I`, escalating the jitter from `1e-10 * scale` by
/// decades up to `1e-4 * scale`. Returns the lower factor and jitter used.
pub(crate) fn cholesky_escalating(a: &DMatrix<f64>, scale: f64) -> Result<(DMatrix<f64>, f64)> {
    if let Some(l) = cholesky_with(a, 0.0) {
        return Ok((l, 0.0));
    }
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let mut tried = vec![0.0];
    let mut rel = JITTER_START;
    while rel <= JITTER_STOP * (1.0 + 1e-9) {
        let jitter = rel * scale;
        tried.push(jitter);
        if let Some(l) = cholesky_with(a, jitter) {
            return Ok((l, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::Conditioning {
        message: format!("Cholesky factorization of a {}x{} matrix failed", a.nrows(), a.ncols()),
        jitter: tried,
    })
}

fn cholesky_with(a: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let mut m = a.clone();
    if jitter != 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
    }
    let l = nalgebra::Cholesky::new(m)?.unpack();
    if l.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
        Some(l)
    } else {
        None
    }
}

fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for (j, bj) in b.iter().enumerate().take(i) {
            s -= l[(i, j)] * bj;
        }
        b[i] = s / l[(i, i)];
    }
}

impl TrainedGp {
    /// Conditions a GP with fixed hyperparameters on `dataset`.
    pub fn condition(dataset: GpDataset, kernel: KernelSpec, prior_mean: impl Into<MeanFunction>) -> Result<Self> {
        Self::check_kernel(&dataset, &kernel)?;
        let rows = dataset.rows();
        let mut k = gram(&kernel, &rows);
        for i in 0..k.nrows() {
            k[(i, i)] += dataset.noise_variance;
        }
        let mean_diag = k.diagonal().mean();
        let (chol, jitter) = cholesky_escalating(&k, mean_diag)?;
        Ok(Self::finish(dataset, kernel, prior_mean.into(), jitter, rows, chol))
    }

    /// Rebuilds a GP with a known jitter, bypassing escalation. Used by checkpoint loading.
    pub fn condition_with_jitter(
        dataset: GpDataset,
        kernel: KernelSpec,
        prior_mean: impl Into<MeanFunction>,
        jitter: f64,
    ) -> Result<Self> {
        Self::check_kernel(&dataset, &kernel)?;
        let rows = dataset.rows();
        let mut k = gram(&kernel, &rows);
        for i in 0..k.nrows() {
            k[(i, i)] += dataset.noise_variance;
        }
        let chol = cholesky_with(&k, jitter).ok_or_else(|| Error::Conditioning {
            message: "stored jitter no longer factors the covariance".into(),
            jitter: vec![jitter],
        })?;
        Ok(Self::finish(dataset, kernel, prior_mean.into(), jitter, rows, chol))
    }

    fn check_kernel(dataset: &GpDataset, kernel: &KernelSpec) -> Result<()> {
        if kernel.dim() != dataset.dim() {
            return Err(Error::Shape(format!(
                "kernel has {} lengthscales, data has {} columns",
                kernel.dim(),
                dataset.dim()
            )));
        }
        Ok(())
    }

    fn finish(
        dataset: GpDataset,
        kernel: KernelSpec,
        prior_mean: MeanFunction,
        jitter: f64,
        rows: Vec<Vec<f64>>,
        chol: DMatrix<f64>,
    ) -> Self {
        let mut alpha: Vec<f64> = dataset
            .targets
            .iter()
            .zip(&rows)
            .map(|(y, r)| y - prior_mean.eval(r))
            .collect();
        forward_substitute(&chol, &mut alpha);
        // back substitution with L^T
        let n = alpha.len();
        for i in (0..n).rev() {
            let mut s = alpha[i];
            for j in i + 1..n {
                s -= chol[(j, i)] * alpha[j];
            }
            alpha[i] = s / chol[(i, i)];
        }
        Self {
            dataset,
            kernel,
            prior_mean,
            jitter,
            rows,
            chol,
            alpha: DVector::from_vec(alpha),
        }
    }

    pub fn dataset(&self) -> &GpDataset {
        &self.dataset
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn prior_mean(&self) -> MeanFunction {
        self.prior_mean
    }

    /// Diagonal jitter added on top of the noise variance to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// `-1/2 y^T alpha - sum log L_ii - n/2 log 2 pi`, with `y` the targets minus the prior mean.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.alpha.len() as f64;
        let quad: f64 = self
            .dataset
            .targets
            .iter()
            .zip(self.alpha.iter())
            .zip(&self.rows)
            .map(|((y, a), r)| (y - self.prior_mean.eval(r)) * a)
            .sum();
        let logdet: f64 = self.chol.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * quad - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior mean and latent-function variance at a single point.
    pub fn predict_point(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query has {} coordinates, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .map(|r| self.kernel.eval_unchecked(x, r))
            .collect();
        let mean = self.prior_mean.eval(x) + v.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum::<f64>();
        forward_substitute(&self.chol, &mut v);
        let var = self.kernel.signal_variance - v.iter().map(|e| e * e).sum::<f64>();
        Ok((mean, clamp_variance(var)?))
    }

    /// Posterior mean and variance for each row of `queries` (`m x d`).
    pub fn predict(&self, queries: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if queries.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "queries have {} columns, model expects {}",
                queries.ncols(),
                self.dim()
            )));
        }
        let m = queries.nrows();
        let mut mean = DVector::zeros(m);
        let mut var = DVector::zeros(m);
        for i in 0..m {
            let q: Vec<f64> = queries.row(i).iter().copied().collect();
            let (mu, s2) = self.predict_point(&q)?;
            mean[i] = mu;
            var[i] = s2;
        }
        Ok((mean, var))
    }

    /// Joint posterior covariance over the query rows.
    pub fn posterior_covariance(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if queries.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "queries have {} columns, model expects {}",
                queries.ncols(),
                self.dim()
            )));
        }
        let m = queries.nrows();
        let q: Vec<Vec<f64>> = (0..m).map(|i| queries.row(i).iter().copied().collect()).collect();
        let vs: Vec<Vec<f64>> = q
            .iter()
            .map(|x| {
                let mut v: Vec<f64> = self.rows.iter().map(|r| self.kernel.eval_unchecked(x, r)).collect();
                forward_substitute(&self.chol, &mut v);
                v
            })
            .collect();
        let mut cov = gram(&self.kernel, &q);
        for i in 0..m {
            for j in 0..=i {
                let dot: f64 = vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum();
                cov[(i, j)] -= dot;
                if i != j {
                    cov[(j, i)] -= dot;
                }
            }
        }
        Ok(cov)
    }

    /// Draws `count` joint posterior samples over the query rows; returns a `count x m` matrix.
    pub fn sample_posterior(&self, queries: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::Input("sample count must be >= 1".into()));
        }
        let (mean, _) = self.predict(queries)?;
        let cov = self.posterior_covariance(queries)?;
        let (l, _) = cholesky_escalating(&cov, self.kernel.signal_variance)?;
        let m = queries.nrows();
        let mut rng = rng::rng(seed);
        let mut out = DMatrix::zeros(count, m);
        let mut z = vec![0.0; m];
        for s in 0..count {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..m {
                let mut v = mean[i];
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    v += l[(i, j)] * zj;
                }
                out[(s, i)] = v;
            }
        }
        Ok(out)
    }
}

fn clamp_variance(var: f64) -> Result<f64> {
    if var >= 0.0 {
        Ok(var)
    } else if var >= VARIANCE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::Conditioning {
            message: format!("negative posterior variance {var:e}"),
            jitter: Vec::new(),
        })
    }
}
