//! Five-level Forrester family, negated so that campaigns maximize.

use super::{Evaluation, MultiFidelityObjective};
use crate::bo::DesignSpace;
use crate::error::{Error, Result};
use crate::fidelity::FidelityLadder;

/// `-(6x - 2)^2 sin(12x - 4)`.
pub fn forrester_high(x: f64) -> f64 {
    -(6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
}

/// `0.5 f_hi(x) - 10 (x - 0.5) + 5`.
pub fn forrester_low(x: f64) -> f64 {
    0.5 * forrester_high(x) - 10.0 * (x - 0.5) + 5.0
}

/// Blend `s f_hi + (1 - s) f_lo` for nominal fidelity `s`.
pub fn forrester_blend(x: f64, s: f64) -> f64 {
    s * forrester_high(x) + (1.0 - s) * forrester_low(x)
}

#[derive(Clone, Debug, Default)]
pub struct Forrester {
    ladder: FidelityLadder,
}

impl Forrester {
    pub fn new(ladder: FidelityLadder) -> Self {
        Self { ladder }
    }

    /// `2^(level - 1)` cost units.
    pub fn cost(level: usize) -> f64 {
        2f64.powi(level as i32 - 1)
    }
}

/// Value and cost of the five-level family at `x` in `[0, 1]`.
pub fn forrester_family(x: &[f64], level: usize) -> Result<Evaluation> {
    Forrester::default().evaluate(x, level)
}

impl MultiFidelityObjective for Forrester {
    fn name(&self) -> &str {
        "forrester5"
    }

    fn dimension(&self) -> usize {
        1
    }

    fn ladder(&self) -> &FidelityLadder {
        &self.ladder
    }

    fn design_space(&self) -> DesignSpace {
        DesignSpace::new(vec![0.0], vec![1.0]).expect("unit interval is a valid box")
    }

    fn evaluate(&self, x: &[f64], level: usize) -> Result<Evaluation> {
        if x.len() != 1 {
            return Err(Error::Shape(format!("forrester5 takes one coordinate, got {}", x.len())));
        }
        if !(0.0..=1.0).contains(&x[0]) {
            return Err(Error::Input(format!("x = {} outside [0, 1]", x[0])));
        }
        let s = self.ladder.level(level)?.nominal;
        Ok(Evaluation {
            value: forrester_blend(x[0], s),
            cost: Self::cost(level),
        })
    }

    fn known_optimum(&self) -> Option<(Vec<f64>, f64)> {
        // refined maximizer of f_hi on [0.7, 0.8]
        let (x, v) = crate::optim::golden_section(|x| -forrester_high(x), 0.7, 0.8, 1e-12);
        Some((vec![x], -v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 10^4-point grid oracle over [0, 1], computed independently
    const GRID_ARGMAX: f64 = 0.7572757275727573;
    const GRID_MAX: f64 = 6.020739667320624;

    #[test]
    fn top_level_near_grid_maximum() {
        let e = forrester_family(&[0.7572], 5).unwrap();
        assert!((e.value - GRID_MAX).abs() < 1e-3);
    }

    #[test]
    fn top_level_is_exactly_high_fidelity() {
        for x in [0.0, 0.13, 0.5, 0.91, 1.0] {
            assert_eq!(forrester_family(&[x], 5).unwrap().value, forrester_high(x));
        }
    }

    #[test]
    fn bottom_level_is_low_fidelity() {
        for x in [0.0, 0.4, 1.0] {
            assert_eq!(forrester_family(&[x], 1).unwrap().value, forrester_low(x));
        }
    }

    #[test]
    fn costs_double() {
        let costs: Vec<f64> = (1..=5).map(|l| forrester_family(&[0.5], l).unwrap().cost).collect();
        assert_eq!(costs, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    }

    #[test]
    fn out_of_box_rejected() {
        assert!(matches!(forrester_family(&[1.2], 1), Err(Error::Input(_))));
        assert!(forrester_family(&[0.5], 6).is_err());
    }

    #[test]
    fn known_optimum_agrees_with_grid() {
        let (x, v) = Forrester::default().known_optimum().unwrap();
        assert!((x[0] - GRID_ARGMAX).abs() < 1e-4);
        assert!(v >= GRID_MAX && v - GRID_MAX < 1e-5);
    }
}
