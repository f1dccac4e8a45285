use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One rung of a fidelity ladder. `index` is 1-based; `nominal` lies in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityLevel {
    pub index: usize,
    pub nominal: f64,
}

/// Ordered set of discrete fidelities with strictly increasing nominal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FidelityLadder {
    nominals: Vec<f64>,
}

impl FidelityLadder {
    pub fn new(nominals: Vec<f64>) -> Result<Self> {
        if nominals.len() < 2 {
            return Err(Error::Input(format!(
                "a fidelity ladder needs at least two levels, got {}",
                nominals.len()
            )));
        }
        if nominals.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Input(format!("fidelity nominals must lie in [0, 1]: {nominals:?}")));
        }
        if nominals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!(
                "fidelity nominals must be strictly increasing: {nominals:?}"
            )));
        }
        Ok(Self { nominals })
    }

    /// The five-level ladder `{0, 0.25, 0.5, 0.75, 1}`.
    pub fn five_level() -> Self {
        Self {
            nominals: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.nominals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nominals.is_empty()
    }

    pub fn nominals(&self) -> &[f64] {
        &self.nominals
    }

    pub fn level(&self, index: usize) -> Result<FidelityLevel> {
        if index == 0 || index > self.len() {
            return Err(Error::Input(format!(
                "fidelity level {index} outside 1..={}",
                self.len()
            )));
        }
        Ok(FidelityLevel {
            index,
            nominal: self.nominals[index - 1],
        })
    }

    pub fn highest(&self) -> FidelityLevel {
        FidelityLevel {
            index: self.len(),
            nominal: self.nominals[self.len() - 1],
        }
    }

    pub fn levels(&self) -> impl Iterator<Item = FidelityLevel> + '_ {
        self.nominals
            .iter()
            .enumerate()
            .map(|(i, &nominal)| FidelityLevel { index: i + 1, nominal })
    }
}

impl Default for FidelityLadder {
    fn default() -> Self {
        Self::five_level()
    }
}

impl TryFrom<Vec<f64>> for FidelityLadder {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FidelityLadder> for Vec<f64> {
    fn from(l: FidelityLadder) -> Self {
        l.nominals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladder() {
        let l = FidelityLadder::default();
        assert_eq!(l.nominals(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(l.highest().index, 5);
        assert_eq!(l.level(3).unwrap().nominal, 0.5);
    }

    #[test]
    fn rejects_bad_ladders() {
        assert!(FidelityLadder::new(vec![1.0]).is_err());
        assert!(FidelityLadder::new(vec![0.0, 0.0]).is_err());
        assert!(FidelityLadder::new(vec![0.5, 0.2]).is_err());
        assert!(FidelityLadder::new(vec![0.0, 1.5]).is_err());
        assert!(FidelityLadder::default().level(0).is_err());
        assert!(FidelityLadder::default().level(6).is_err());
    }
}
