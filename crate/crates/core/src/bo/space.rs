use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DesignSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Shape(format!(
                "bounds must be non-empty and equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Input(format!("bound {i}: need finite lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Maps a point of the unit cube into the box, clamping to the bounds.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (lo, hi))| (lo + t.clamp(0.0, 1.0) * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(DesignSpace::new(vec![0.0], vec![0.0]).is_err());
        assert!(DesignSpace::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(DesignSpace::new(vec![], vec![]).is_err());
    }

    #[test]
    fn unit_mapping_stays_inside() {
        let s = DesignSpace::new(vec![-1.0, 5.0], vec![1.0, 5.0 + 1e-12]).unwrap();
        for u in [[0.0, 0.0], [1.0, 1.0], [0.3, 0.7], [1.5, -0.2]] {
            assert!(s.contains(&s.from_unit(&u)));
        }
    }
}
