//! Synthetic scenarios: standard-normal attributes and a flat Dirichlet
//! coefficient matrix.

use std::path::Path;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Parameter, Scenario};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Alternatives.
    pub m: usize,
    /// Alternative attributes.
    pub alt_dim: usize,
    /// Agent attributes.
    pub agent_dim: usize,
    pub n_key: usize,
    pub n_regular: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// Ten alternatives, three attributes each side, five key and twenty regular agents.
    fn default() -> Self {
        Self {
            m: 10,
            alt_dim: 3,
            agent_dim: 3,
            n_key: 5,
            n_regular: 20,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n_key < 1 || self.alt_dim < 1 || self.agent_dim < 1 {
            return Err(Error::Config(format!("invalid scenario configuration {self:?}")));
        }
        Ok(())
    }
}

/// Draws profiles and a ground-truth parameter whose K·L entries follow a
/// flat Dirichlet (non-negative, summing to one).
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(Scenario, Parameter)> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    let mut normals = |n: usize, dim: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    };
    let alternatives = normals(cfg.m, cfg.alt_dim);
    let agents = normals(cfg.n_key + cfg.n_regular, cfg.agent_dim);
    let scenario = Scenario::new(alternatives, agents, cfg.n_key)?;
    let truth = Parameter::from_vec(
        cfg.alt_dim,
        cfg.agent_dim,
        flat_dirichlet(&mut rng, cfg.alt_dim * cfg.agent_dim),
    )?;
    Ok((scenario, truth))
}

/// Normalized unit exponentials, i.e. Dir(1, ..., 1).
pub fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub m: usize,
    #[serde(rename = "K")]
    pub alt_dim: usize,
    #[serde(rename = "L")]
    pub agent_dim: usize,
    pub n1: usize,
    pub n2: usize,
    pub alternatives: Vec<Vec<f64>>,
    pub agents: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<Vec<f64>>>,
}

impl ScenarioFile {
    pub fn new(scenario: &Scenario, truth: Option<&Parameter>) -> Self {
        Self {
            m: scenario.num_alternatives(),
            alt_dim: scenario.alt_dim(),
            agent_dim: scenario.agent_dim(),
            n1: scenario.n_key(),
            n2: scenario.regular_agents().len(),
            alternatives: scenario.alternatives().iter().map(|a| a.attributes.clone()).collect(),
            agents: scenario.agents().iter().map(|a| a.attributes.clone()).collect(),
            ground_truth: truth.map(Parameter::rows),
        }
    }

    pub fn into_parts(self) -> Result<(Scenario, Option<Parameter>)> {
        if self.alternatives.len() != self.m || self.agents.len() != self.n1 + self.n2 {
            return Err(Error::InvalidScenario(
                "counts do not match the attribute arrays".into(),
            ));
        }
        let scenario = Scenario::new(self.alternatives, self.agents, self.n1)?;
        if scenario.alt_dim() != self.alt_dim || scenario.agent_dim() != self.agent_dim {
            return Err(Error::InvalidScenario("attribute dimensions do not match K/L".into()));
        }
        let truth = match self.ground_truth {
            Some(rows) => {
                let p = Parameter::from_rows(&rows)?;
                scenario.check_parameter(&p)?;
                Some(p)
            }
            None => None,
        };
        Ok((scenario, truth))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
