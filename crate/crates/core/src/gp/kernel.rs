use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    SquaredExponential,
    #[serde(rename = "matern-5/2")]
    Matern52,
}

/// Stationary ARD covariance function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::Input("kernel needs at least one lengthscale".into()));
        }
        if lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Input(format!(
                "lengthscales must be positive and finite, got {lengthscales:?}"
            )));
        }
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(Error::Input(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        Ok(Self {
            kind,
            lengthscales,
            signal_variance,
        })
    }

    pub fn squared_exponential(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        Self::new(KernelKind::SquaredExponential, lengthscales, signal_variance)
    }

    pub fn matern52(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        Self::new(KernelKind::Matern52, lengthscales, signal_variance)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(Error::Shape(format!(
                "kernel has {} lengthscales but inputs have lengths {} and {}",
                self.dim(),
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    /// Covariance without the dimension check; callers guarantee matching lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        self.eval_scaled_sq_distance(r2)
    }

    #[inline]
    fn eval_scaled_sq_distance(&self, r2: f64) -> f64 {
        match self.kind {
            KernelKind::SquaredExponential => self.signal_variance * (-0.5 * r2).exp(),
            KernelKind::Matern52 => {
                let s5r = (5.0 * r2).sqrt();
                self.signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
            }
        }
    }
}

/// Covariance between two points under `spec`.
pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    spec.eval(a, b)
}
