//! Residence time distributions and the tanks-in-series model
//! `E(theta) = N (N theta)^(N-1) exp(-N theta) / Gamma(N)`.

use std::io::Write;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::optim::golden_section;

/// Normalized outlet tracer response on a dimensionless time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RtdCurve {
    theta: Vec<f64>,
    e_theta: Vec<f64>,
}

pub const NORMALIZATION_TOL: f64 = 1e-3;

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

impl RtdCurve {
    /// Validates grid shape, non-negativity and unit area.
    pub fn new(theta: Vec<f64>, e_theta: Vec<f64>) -> Result<Self> {
        Self::check_grid(&theta, &e_theta)?;
        let area = trapezoid(&theta, &e_theta);
        if (area - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Input(format!("RTD area {area} is not within {NORMALIZATION_TOL} of 1")));
        }
        Ok(Self { theta, e_theta })
    }

    /// Scales a raw outlet response to unit trapezoid area.
    pub fn normalized(theta: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        Self::check_grid(&theta, &raw)?;
        let area = trapezoid(&theta, &raw);
        if !(area.is_finite() && area > 0.0) {
            return Err(Error::Input(format!("RTD response has non-positive area {area}")));
        }
        let e_theta = raw.into_iter().map(|v| v / area).collect();
        Ok(Self { theta, e_theta })
    }

    fn check_grid(theta: &[f64], e: &[f64]) -> Result<()> {
        if theta.len() < 3 || theta.len() != e.len() {
            return Err(Error::Input(format!(
                "RTD needs >= 3 matching points, got {} theta and {} values",
                theta.len(),
                e.len()
            )));
        }
        if theta[0] != 0.0 {
            return Err(Error::Input("RTD grid must start at theta = 0".into()));
        }
        if theta.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::Input("RTD grid must be strictly increasing".into()));
        }
        if e.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Input("RTD values must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn e_theta(&self) -> &[f64] {
        &self.e_theta
    }

    pub fn area(&self) -> f64 {
        trapezoid(&self.theta, &self.e_theta)
    }

    pub fn mean(&self) -> f64 {
        let w: Vec<f64> = self.theta.iter().zip(&self.e_theta).map(|(t, e)| t * e).collect();
        trapezoid(&self.theta, &w) / self.area()
    }

    /// Dimensionless variance `sigma^2 / mean^2`.
    pub fn dimensionless_variance(&self) -> f64 {
        let m = self.mean();
        let w: Vec<f64> = self
            .theta
            .iter()
            .zip(&self.e_theta)
            .map(|(t, e)| (t - m) * (t - m) * e)
            .collect();
        trapezoid(&self.theta, &w) / self.area() / (m * m)
    }

    /// Location of the largest `E` value.
    pub fn peak_theta(&self) -> f64 {
        let i = self
            .e_theta
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        self.theta[i]
    }

    /// Two-column CSV with header `theta,e_theta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,e_theta")?;
        for (t, e) in self.theta.iter().zip(&self.e_theta) {
            writeln!(w, "{t},{e}")?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "theta,e_theta" => {}
            other => return Err(Error::Input(format!("unexpected RTD CSV header {other:?}"))),
        }
        let mut theta = Vec::new();
        let mut e = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let parse = |c: Option<&str>| -> Result<f64> {
                c.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Input(format!("bad RTD CSV row {}: {line}", i + 2)))
            };
            theta.push(parse(cols.next())?);
            e.push(parse(cols.next())?);
            if cols.next().is_some() {
                return Err(Error::Input(format!("RTD CSV row {} has extra columns", i + 2)));
            }
        }
        Self::new(theta, e)
    }
}

/// Tanks-in-series density at `theta` for real `n > 0`.
pub fn tanks_in_series_e(n: f64, theta: f64) -> f64 {
    if theta <= 0.0 {
        return if n == 1.0 {
            1.0
        } else if n > 1.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    (n.ln() + (n - 1.0) * (n * theta).ln() - n * theta - ln_gamma(n)).exp()
}

/// Samples the tanks-in-series model on `points` equally spaced values of `[0, theta_max]`.
pub fn synthetic_curve(n: f64, theta_max: f64, points: usize) -> Result<RtdCurve> {
    let theta: Vec<f64> = (0..points)
        .map(|i| theta_max * i as f64 / (points - 1) as f64)
        .collect();
    let e = theta.iter().map(|&t| tanks_in_series_e(n, t)).collect();
    RtdCurve::new(theta, e)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlugFlowMetric {
    pub n_tanks: f64,
    pub fit_residual: f64,
}

/// Method-of-moments tank count `1 / sigma_theta^2`.
pub fn moment_estimate(curve: &RtdCurve) -> Result<f64> {
    let var = curve.dimensionless_variance();
    if !(var.is_finite() && var > 1e-12) {
        return Err(Error::Fit(format!(
            "RTD has zero variance ({var:e}); the curve is in the plug-flow limit N -> infinity"
        )));
    }
    Ok(1.0 / var)
}

// theta = 0 is skipped: the model is discontinuous in N there (0, 1 or inf).
fn sse(curve: &RtdCurve, n: f64) -> f64 {
    curve
        .theta
        .iter()
        .zip(&curve.e_theta)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &e)| {
            let m = tanks_in_series_e(n, t);
            (m - e) * (m - e)
        })
        .sum()
}

/// Least-squares tank count, searched in `ln N` over
/// `[max(0.5, N0 / 10), 10 N0]` with `N0` the moment estimate.
pub fn fit_tanks_in_series(curve: &RtdCurve) -> Result<PlugFlowMetric> {
    let n0 = moment_estimate(curve)?;
    let lo = (0.5f64).max(n0 / 10.0).ln();
    let hi = (10.0 * n0).max(0.5 * 1.0001).ln();
    let (log_n, residual) = golden_section(|ln| sse(curve, ln.exp()), lo, hi, 1e-10);
    let n_tanks = log_n.exp();
    if !(n_tanks.is_finite() && n_tanks > 0.0 && residual.is_finite()) {
        return Err(Error::Fit(format!("fit produced N = {n_tanks}, residual {residual}")));
    }
    Ok(PlugFlowMetric {
        n_tanks,
        fit_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_case() {
        let curve = synthetic_curve(1.0, 20.0, 500).unwrap();
        let fit = fit_tanks_in_series(&curve).unwrap();
        assert!((fit.n_tanks - 1.0).abs() < 1e-3, "{}", fit.n_tanks);
    }

    #[test]
    fn five_tanks_round_trip() {
        let curve = synthetic_curve(5.0, 4.0, 500).unwrap();
        let fit = fit_tanks_in_series(&curve).unwrap();
        assert!((fit.n_tanks - 5.0).abs() < 1e-3, "{}", fit.n_tanks);
        assert!(fit.fit_residual < 1e-12);
    }

    #[test]
    fn five_tanks_moment_estimate() {
        let curve = synthetic_curve(5.0, 4.0, 500).unwrap();
        let n0 = moment_estimate(&curve).unwrap();
        assert!((n0 - 5.0).abs() < 2e-2, "{n0}");
    }

    #[test]
    fn degenerate_curve_rejected() {
        let spike = RtdCurve::new(
            vec![0.0, 1.0 - 1e-12, 1.0, 1.0 + 1e-12, 2.0],
            vec![0.0, 0.0, 1e12, 0.0, 0.0],
        )
        .unwrap();
        assert!(matches!(fit_tanks_in_series(&spike), Err(Error::Fit(_))));
    }

    #[test]
    fn curve_validation() {
        assert!(RtdCurve::new(vec![0.1, 0.2, 0.3], vec![1.0; 3]).is_err());
        assert!(RtdCurve::new(vec![0.0, 0.2, 0.1], vec![1.0; 3]).is_err());
        assert!(RtdCurve::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0, 1.0]).is_err());
        assert!(RtdCurve::new(vec![0.0, 0.5, 1.0], vec![5.0; 3]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let curve = synthetic_curve(3.0, 5.0, 50).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let back = RtdCurve::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, curve);
    }
}
