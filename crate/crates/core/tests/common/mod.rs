//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the crate's kernel or factorization code: kernels
//! are re-derived from their closed forms and linear algebra goes through a
//! dense LU inverse.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dense grid maximum of `-(6x-2)^2 sin(12x-4)` over 10^4 points of [0, 1].
pub const FORRESTER_X_STAR: f64 = 0.7572757275727573;
pub const FORRESTER_F_STAR: f64 = 6.020739667320624;

/// `(1 + sqrt5 + 5/3) exp(-sqrt5)`.
pub const MATERN52_AT_ONE: f64 = 0.5239941088318203;

/// `40 * 5^0.8 * 0.25^0.4`.
pub const DEFAULT_PECLET: f64 = 83.2553207401873;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleKernel {
    Se,
    Matern52,
}

pub fn oracle_kernel(kind: OracleKernel, ls: &[f64], sv: f64, a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    match kind {
        OracleKernel::Se => sv * (-0.5 * r2).exp(),
        OracleKernel::Matern52 => {
            let r = r2.sqrt();
            let s5 = 5f64.sqrt() * r;
            sv * (1.0 + s5 + 5.0 * r2 / 3.0) * (-s5).exp()
        }
    }
}

pub struct Oracle {
    pub kind: OracleKernel,
    pub ls: Vec<f64>,
    pub sv: f64,
    /// Total diagonal addition (noise plus any jitter).
    pub diag: f64,
    pub mean: f64,
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Oracle {
    fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        oracle_kernel(self.kind, &self.ls, self.sv, a, b)
    }

    fn cov(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.k(&self.rows[i], &self.rows[j]) + if i == j { self.diag } else { 0.0 }
        })
    }

    fn inverse(&self) -> DMatrix<f64> {
        self.cov().lu().try_inverse().expect("oracle covariance invertible")
    }

    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let inv = self.inverse();
        let ks = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| self.k(q, r)));
        let r = DVector::from_iterator(self.y.len(), self.y.iter().map(|y| y - self.mean));
        let mean = self.mean + (ks.transpose() * &inv * r)[(0, 0)];
        let var = self.k(q, q) - (ks.transpose() * &inv * &ks)[(0, 0)];
        (mean, var)
    }

    pub fn lml(&self) -> f64 {
        let cov = self.cov();
        let det = cov.clone().lu().determinant();
        let inv = self.inverse();
        let r = DVector::from_iterator(self.y.len(), self.y.iter().map(|y| y - self.mean));
        let n = self.y.len() as f64;
        -0.5 * (r.transpose() * inv * &r)[(0, 0)] - 0.5 * det.ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Random well-conditioned regression problem with `n <= 20`, `d <= 3`.
pub struct RandomProblem {
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub ls: Vec<f64>,
    pub sv: f64,
    pub noise: f64,
    pub queries: Vec<Vec<f64>>,
}

pub fn random_problem(seed: u64) -> RandomProblem {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.random_range(1..=20);
    let d = r.random_range(1..=3);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let y = rows
        .iter()
        .map(|x| x.iter().map(|v| (1.3 * v).sin()).sum::<f64>() + r.random_range(-0.1..0.1))
        .collect();
    let ls = (0..d).map(|_| r.random_range(0.3..1.5)).collect();
    let queries = (0..3).map(|_| (0..d).map(|_| r.random_range(-2.5..2.5)).collect()).collect();
    RandomProblem {
        rows,
        y,
        ls,
        sv: r.random_range(0.5..2.0),
        noise: 10f64.powf(r.random_range(-4.0..-2.0)),
        queries,
    }
}

/// Noise-free target used by the interpolation checks.
pub fn smooth_target(x: &[f64]) -> f64 {
    x.iter().map(|v| (1.3 * v).sin()).sum()
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Convergence check: `|N_l - N_T|` may grow by at most 5% from one level to the next.
pub fn converges_within_slack(ns: &[f64], slack: f64) -> bool {
    let top = *ns.last().unwrap();
    let errs: Vec<f64> = ns.iter().map(|n| (n - top).abs()).collect();
    errs.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0] + 1e-12)
}

/// Two-level data set where the upper level repeats the lower one exactly.
pub fn correlated_toy() -> mfdgp::dgp::MultiFidelityDataset {
    use mfdgp::dgp::{LevelObservations, MultiFidelityDataset};
    let mut lo = LevelObservations::default();
    for i in 0..8 {
        let x = i as f64 / 7.0;
        lo.push(vec![x], (6.0 * x).sin() + 0.5 * x);
    }
    let hi = lo.clone();
    MultiFidelityDataset::new(1, vec![lo, hi]).unwrap()
}

/// Five-level Forrester observations on per-level Latin hypercubes.
pub fn forrester_data(per_level: usize, seed: u64) -> mfdgp::dgp::MultiFidelityDataset {
    use mfdgp::dgp::{LevelObservations, MultiFidelityDataset};
    use mfdgp::objectives::forrester_family;
    let levels = (1..=5)
        .map(|level| {
            let mut obs = LevelObservations::default();
            for x in mfdgp::design::latin_hypercube(per_level, 1, seed + level as u64) {
                let y = forrester_family(&x, level).unwrap().value;
                obs.push(x, y);
            }
            obs
        })
        .collect();
    MultiFidelityDataset::new(1, levels).unwrap()
}

pub fn two_level_ladder() -> mfdgp::fidelity::FidelityLadder {
    mfdgp::fidelity::FidelityLadder::new(vec![0.0, 1.0]).unwrap()
}

/// θ span that keeps the tanks-in-series tail below double precision noise.
pub fn tis_span(n: f64) -> f64 {
    (20.0 / n).max(4.0)
}

/// Random geometry drawn from the proxy's design box.
pub fn random_geometry(seed: u64) -> mfdgp::objectives::ReactorGeometry {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let space = mfdgp::objectives::ReactorProxy::default_space();
    let u: Vec<f64> = (0..4).map(|_| r.random_range(0.0..1.0)).collect();
    mfdgp::objectives::ReactorGeometry::from_design(&space.from_unit(&u), 20.0).unwrap()
}
