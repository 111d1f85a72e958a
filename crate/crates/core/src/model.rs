//! Domain types: alternative and agent profiles, the coefficient matrix,
//! questions, responses and datasets.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeProfile {
    pub id: usize,
    pub attributes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Key,
    Regular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: usize,
    pub attributes: Vec<f64>,
    pub group: Group,
}

/// The K×L coefficient matrix `B`.
///
/// Rows are indexed by alternative attributes, columns by agent attributes.
/// The vectorized view stores entry `(κ, ι)` at `κ·L + ι`; every covariance
/// lookup relies on this map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    alt_dim: usize,
    agent_dim: usize,
    values: Vec<f64>,
}

impl Parameter {
    pub fn zeros(alt_dim: usize, agent_dim: usize) -> Self {
        Self {
            alt_dim,
            agent_dim,
            values: vec![0.0; alt_dim * agent_dim],
        }
    }

    pub fn from_vec(alt_dim: usize, agent_dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != alt_dim * agent_dim {
            return Err(Error::InvalidScenario(format!(
                "parameter has {} entries, expected {}x{}",
                values.len(),
                alt_dim,
                agent_dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario("parameter entries must be finite".into()));
        }
        Ok(Self {
            alt_dim,
            agent_dim,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let alt_dim = rows.len();
        let agent_dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != agent_dim) {
            return Err(Error::InvalidScenario("ragged parameter matrix".into()));
        }
        Self::from_vec(alt_dim, agent_dim, rows.concat())
    }

    pub fn from_vector(alt_dim: usize, agent_dim: usize, v: &DVector<f64>) -> Result<Self> {
        Self::from_vec(alt_dim, agent_dim, v.iter().copied().collect())
    }

    /// K, the number of alternative attributes.
    pub fn alt_dim(&self) -> usize {
        self.alt_dim
    }

    /// L, the number of agent attributes.
    pub fn agent_dim(&self) -> usize {
        self.agent_dim
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn index(&self, kappa: usize, iota: usize) -> usize {
        kappa * self.agent_dim + iota
    }

    pub fn get(&self, kappa: usize, iota: usize) -> f64 {
        self.values[self.index(kappa, iota)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.alt_dim, self.agent_dim, &self.values)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.agent_dim.max(1)).map(<[f64]>::to_vec).collect()
    }
}

/// "Rank your top `depth` among `subset`."
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    subset: Vec<usize>,
    depth: usize,
}

impl Question {
    pub fn new(subset: Vec<usize>, depth: usize) -> Result<Self> {
        if subset.len() < 2 {
            return Err(Error::Domain("a question needs at least two alternatives".into()));
        }
        if depth == 0 || depth >= subset.len() {
            return Err(Error::Domain(format!(
                "depth {depth} outside [1, {}]",
                subset.len() - 1
            )));
        }
        let mut seen = HashSet::with_capacity(subset.len());
        if !subset.iter().all(|id| seen.insert(*id)) {
            return Err(Error::Domain("duplicate alternative in question subset".into()));
        }
        Ok(Self { subset, depth })
    }

    pub fn pairwise(a: usize, b: usize) -> Result<Self> {
        Self::new(vec![a, b], 1)
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// k
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// l
    pub fn size(&self) -> usize {
        self.subset.len()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.subset.contains(&id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    agent: usize,
    question: Question,
    ranking: Vec<usize>,
}

impl Response {
    pub fn new(agent: usize, question: Question, ranking: Vec<usize>) -> Result<Self> {
        if ranking.len() != question.depth() {
            return Err(Error::Domain(format!(
                "ranking has {} entries, question asks for {}",
                ranking.len(),
                question.depth()
            )));
        }
        let mut seen = HashSet::with_capacity(ranking.len());
        for id in &ranking {
            if !question.contains(*id) {
                return Err(Error::Domain(format!("alternative {id} is not in the question")));
            }
            if !seen.insert(*id) {
                return Err(Error::Domain(format!("alternative {id} ranked twice")));
            }
        }
        Ok(Self {
            agent,
            question,
            ranking,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn question(&self) -> &Question {
        &self.question
    }

    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    /// Subset members in stage order: the ranked prefix first, then the
    /// unranked remainder in subset order.
    pub fn stage_order(&self) -> Vec<usize> {
        let mut order = self.ranking.clone();
        order.extend(self.question.subset().iter().filter(|id| !self.ranking.contains(id)));
        order
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    entries: Vec<Response>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: Response) {
        self.entries.push(r);
    }

    pub fn entries(&self) -> &[Response] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<Response> for Dataset {
    fn from_iter<T: IntoIterator<Item = Response>>(iter: T) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// The m alternatives and n1 + n2 agents of one elicitation problem.
///
/// Agents with id below `n_key` form the key group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    alternatives: Vec<AlternativeProfile>,
    agents: Vec<AgentProfile>,
    n_key: usize,
}

impl Scenario {
    pub fn new(alternatives: Vec<Vec<f64>>, agents: Vec<Vec<f64>>, n_key: usize) -> Result<Self> {
        if alternatives.len() < 2 {
            return Err(Error::InvalidScenario("need at least two alternatives".into()));
        }
        if n_key > agents.len() {
            return Err(Error::InvalidScenario("more key agents than agents".into()));
        }
        let alt_dim = alternatives[0].len();
        let agent_dim = agents.first().map_or(0, Vec::len);
        if alt_dim == 0 || (!agents.is_empty() && agent_dim == 0) {
            return Err(Error::InvalidScenario("attribute vectors must be non-empty".into()));
        }
        if alternatives.iter().any(|z| z.len() != alt_dim) {
            return Err(Error::InvalidScenario("alternatives differ in attribute count".into()));
        }
        if agents.iter().any(|x| x.len() != agent_dim) {
            return Err(Error::InvalidScenario("agents differ in attribute count".into()));
        }
        if alternatives.iter().chain(&agents).flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario("attributes must be finite".into()));
        }
        Ok(Self {
            alternatives: alternatives
                .into_iter()
                .enumerate()
                .map(|(id, attributes)| AlternativeProfile { id, attributes })
                .collect(),
            agents: agents
                .into_iter()
                .enumerate()
                .map(|(id, attributes)| AgentProfile {
                    id,
                    attributes,
                    group: if id < n_key { Group::Key } else { Group::Regular },
                })
                .collect(),
            n_key,
        })
    }

    pub fn alternatives(&self) -> &[AlternativeProfile] {
        &self.alternatives
    }

    pub fn agents(&self) -> &[AgentProfile] {
        &self.agents
    }

    pub fn num_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    pub fn alt_dim(&self) -> usize {
        self.alternatives[0].attributes.len()
    }

    pub fn agent_dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.attributes.len())
    }

    pub fn param_dim(&self) -> usize {
        self.alt_dim() * self.agent_dim()
    }

    pub fn n_key(&self) -> usize {
        self.n_key
    }

    pub fn key_agents(&self) -> &[AgentProfile] {
        &self.agents[..self.n_key]
    }

    pub fn regular_agents(&self) -> &[AgentProfile] {
        &self.agents[self.n_key..]
    }

    pub fn alternative(&self, id: usize) -> Result<&AlternativeProfile> {
        self.alternatives
            .get(id)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown alternative {id}")))
    }

    pub fn agent(&self, id: usize) -> Result<&AgentProfile> {
        self.agents
            .get(id)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown agent {id}")))
    }

    pub fn check_parameter(&self, param: &Parameter) -> Result<()> {
        if param.alt_dim() != self.alt_dim() || param.agent_dim() != self.agent_dim() {
            return Err(Error::InvalidScenario(format!(
                "parameter is {}x{}, scenario needs {}x{}",
                param.alt_dim(),
                param.agent_dim(),
                self.alt_dim(),
                self.agent_dim()
            )));
        }
        Ok(())
    }

    pub fn check_question(&self, q: &Question) -> Result<()> {
        match q.subset().iter().find(|id| **id >= self.num_alternatives()) {
            Some(id) => Err(Error::InvalidScenario(format!("unknown alternative {id}"))),
            None => Ok(()),
        }
    }

    pub fn check_response(&self, r: &Response) -> Result<()> {
        self.agent(r.agent())?;
        self.check_question(r.question())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_rejects_bad_shapes() {
        assert!(Question::new(vec![0], 1).is_err());
        assert!(Question::new(vec![0, 1], 2).is_err());
        assert!(Question::new(vec![0, 1], 0).is_err());
        assert!(Question::new(vec![0, 0, 1], 1).is_err());
        assert!(Question::new(vec![2, 0, 1], 2).is_ok());
    }

    #[test]
    fn response_checks_ranking_against_subset() {
        let q = Question::new(vec![3, 1, 4], 2).unwrap();
        assert!(Response::new(0, q.clone(), vec![4, 3]).is_ok());
        assert!(Response::new(0, q.clone(), vec![4]).is_err());
        assert!(Response::new(0, q.clone(), vec![4, 5]).is_err());
        assert!(Response::new(0, q.clone(), vec![4, 4]).is_err());
        let r = Response::new(0, q, vec![4, 3]).unwrap();
        assert_eq!(r.stage_order(), vec![4, 3, 1]);
    }

    #[test]
    fn parameter_index_map_is_row_major() {
        let p = Parameter::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(p.alt_dim(), 2);
        assert_eq!(p.agent_dim(), 3);
        assert_eq!(p.index(1, 2), 5);
        assert_eq!(p.get(1, 0), 4.0);
        assert_eq!(p.to_matrix()[(0, 2)], 3.0);
        assert_eq!(p.rows()[1], vec![4.0, 5.0, 6.0]);
        assert!(Parameter::from_vec(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn scenario_assigns_groups_by_id() {
        let s = Scenario::new(vec![vec![0.0]; 3], vec![vec![1.0]; 4], 2).unwrap();
        assert_eq!(s.key_agents().len(), 2);
        assert!(s.regular_agents().iter().all(|a| a.group == Group::Regular));
        assert_eq!(s.agents()[1].group, Group::Key);
        assert!(Scenario::new(vec![vec![0.0], vec![0.0, 1.0]], vec![], 0).is_err());
        assert!(Scenario::new(vec![vec![0.0]], vec![], 0).is_err());
    }
}
