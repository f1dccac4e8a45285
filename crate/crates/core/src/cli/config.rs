//! Campaign configuration file (TOML, unknown keys rejected).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bo::{CampaignSettings, DesignSpace, ModelSettings, UcbConfig};
use crate::error::{Error, Result};
use crate::fidelity::FidelityLadder;
use crate::objectives::{Forrester, MultiFidelityObjective, ReactorProxy, OBJECTIVE_NAMES};

pub const TEMPLATE: &str = r#"# mfdgp campaign configuration.
# Every key is shown with its default. Unknown keys are rejected.

[objective]
# Registered objective: "forrester5" (1-D benchmark) or "reactor-proxy"
# (coiled-tube geometry: coil radius, tube radius, pitch, inversion fraction).
name = "forrester5"
# Design box. Empty lists select the objective's own box.
lower = []
upper = []
# Fidelity nominals in [0, 1], strictly increasing, lowest first.
fidelities = [0.0, 0.25, 0.5, 0.75, 1.0]
# Per-level base costs for reactor-proxy. Empty selects 1, 2, 4, 8, 16.
base_costs = []

[campaign]
# Initial Latin-hypercube samples per fidelity level.
n_initial = 1
# Total budget in accumulated evaluation cost.
budget = 40.0
# UCB exploration weight: mu + sqrt(beta) * sigma.
beta = 2.0
# Seed for every random stream of the campaign.
seed = 7

[acquisition]
# Candidate pool scored before local refinement.
pool_size = 512
# Best pool points refined by local search.
restarts = 8

[model]
# "squared-exponential" or "matern-5/2".
kernel = "squared-exponential"
# Likelihood restarts per layer.
restarts = 3
# Observation noise as a fraction of each level's target variance.
relative_noise = 1e-6
# Monte-Carlo samples while solving the acquisition.
propagation_samples = 100
# Monte-Carlo samples for the final report.
report_samples = 2000

[output]
# Directory for the results log, model and reports.
dir = "mfdgp-out"
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fidelities: Vec<f64>,
    pub base_costs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub n_initial: usize,
    pub budget: f64,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSection {
    pub pool_size: usize,
    pub restarts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub objective: ObjectiveSection,
    pub campaign: CampaignSection,
    pub acquisition: AcquisitionSection,
    pub model: ModelSettings,
    pub output: OutputSection,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self::parse(TEMPLATE).expect("built-in template parses")
    }
}

impl CampaignConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Input(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let objective = self.objective()?;
        self.space(objective.as_ref())?;
        self.settings().validate()
    }

    pub fn ladder(&self) -> Result<FidelityLadder> {
        FidelityLadder::new(self.objective.fidelities.clone())
    }

    /// Instantiates the configured objective.
    pub fn objective(&self) -> Result<Box<dyn MultiFidelityObjective>> {
        let ladder = self.ladder()?;
        let costs = &self.objective.base_costs;
        match self.objective.name.as_str() {
            "forrester5" => {
                if !costs.is_empty() {
                    return Err(Error::Input("forrester5 has fixed costs; base_costs must be empty".into()));
                }
                Ok(Box::new(Forrester::new(ladder)))
            }
            "reactor-proxy" => {
                let mut proxy = ReactorProxy::new(self.campaign.seed).with_ladder(ladder)?;
                if !costs.is_empty() {
                    proxy = proxy.with_base_costs(costs.clone())?;
                }
                Ok(Box::new(proxy))
            }
            other => Err(Error::Input(format!(
                "unknown objective {other:?}; known: {}",
                OBJECTIVE_NAMES.join(", ")
            ))),
        }
    }

    /// Configured box, or the objective's own when both bound lists are empty.
    /// A configured box must lie inside the objective's domain.
    pub fn space(&self, objective: &dyn MultiFidelityObjective) -> Result<DesignSpace> {
        let domain = objective.design_space();
        let (lower, upper) = (&self.objective.lower, &self.objective.upper);
        if lower.is_empty() && upper.is_empty() {
            return Ok(domain);
        }
        let space = DesignSpace::new(lower.clone(), upper.clone())?;
        if space.dim() != objective.dimension() {
            return Err(Error::Input(format!(
                "bounds have {} dimensions, {} needs {}",
                space.dim(),
                objective.name(),
                objective.dimension()
            )));
        }
        if !(domain.contains(space.lower()) && domain.contains(space.upper())) {
            return Err(Error::Input(format!(
                "bounds {lower:?}..{upper:?} leave the {} domain {:?}..{:?}",
                objective.name(),
                domain.lower(),
                domain.upper()
            )));
        }
        Ok(space)
    }

    pub fn settings(&self) -> CampaignSettings {
        CampaignSettings {
            n_initial: self.campaign.n_initial,
            ucb: UcbConfig {
                beta: self.campaign.beta,
                restarts: self.acquisition.restarts,
                pool_size: self.acquisition.pool_size,
            },
            budget_total: self.campaign.budget,
            seed: self.campaign.seed,
            model: self.model.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_round_trip() {
        let cfg = CampaignConfig::default();
        assert_eq!(cfg.objective.name, "forrester5");
        assert_eq!(cfg.settings().ucb, UcbConfig::default());
        assert_eq!(cfg.model, ModelSettings::default());
        assert_eq!(CampaignConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = TEMPLATE.replace("beta = 2.0", "beta = 2.0\ngamma = 1.0");
        assert!(CampaignConfig::parse(&text).is_err());
    }

    #[test]
    fn bad_values_rejected() {
        for (from, to) in [
            ("n_initial = 1", "n_initial = 0"),
            ("name = \"forrester5\"", "name = \"branin\""),
            ("lower = []\nupper = []", "lower = [0.0, 0.0]\nupper = [1.0, 1.0]"),
            ("lower = []\nupper = []", "lower = [-1.0]\nupper = [1.0]"),
            ("base_costs = []", "base_costs = [1.0, 2.0, 4.0, 8.0, 16.0]"),
            ("budget = 40.0", "budget = -1.0"),
            ("beta = 2.0", "beta = -2.0"),
        ] {
            let text = TEMPLATE.replace(from, to);
            assert_ne!(text, TEMPLATE);
            assert!(CampaignConfig::parse(&text).is_err(), "{to}");
        }
    }

    #[test]
    fn reactor_config() {
        let text = TEMPLATE.replace("name = \"forrester5\"", "name = \"reactor-proxy\"");
        let cfg = CampaignConfig::parse(&text).unwrap();
        let obj = cfg.objective().unwrap();
        assert_eq!(cfg.space(obj.as_ref()).unwrap().dim(), 4);
        let short = text.replace("[0.0, 0.25, 0.5, 0.75, 1.0]", "[0.0, 1.0]");
        assert!(CampaignConfig::parse(&short).is_err());
    }
}
