//! One live elicitation: the engine state plus the pending question.

use std::sync::Arc;

use elicit_core::{
    build_design_space, CostModel, CriterionSpec, Dataset, Elicitation, EngineConfig, Proposal, Question, Response,
    Scenario, SubsetPolicy,
};

use crate::api::{
    AlternativeView, CostDoc, CreateSession, NamedValue, QuestionView, SessionState, SessionView, SubmitAnswer,
    BUILTIN_COST_MODEL,
};
use crate::error::{Result, ServiceError};

/// Subsets drawn per agent for templates between pairs and full subsets.
const DEFAULT_SUBSET_COUNT: usize = 10;

#[derive(Debug)]
pub struct Session {
    id: String,
    budget: f64,
    criterion: String,
    attribute_names: Vec<String>,
    labels: Vec<String>,
    scenario: Arc<Scenario>,
    engine: Elicitation,
    pending: Option<Proposal>,
}

/// The state after an accepted answer, not yet committed.
pub struct Prepared {
    engine: Elicitation,
    pending: Option<Proposal>,
}

fn invalid(e: elicit_core::Error) -> ServiceError {
    match e {
        elicit_core::Error::Convergence { .. } => ServiceError::Engine(e),
        other => ServiceError::InvalidRequest(other.to_string()),
    }
}

fn cost_model(doc: &CostDoc) -> Result<CostModel> {
    match doc {
        CostDoc::Builtin(name) if name == BUILTIN_COST_MODEL => Ok(CostModel::MturkHotels),
        CostDoc::Builtin(name) => Err(ServiceError::InvalidRequest(format!("unknown cost model {name:?}"))),
        CostDoc::Table(entries) => CostModel::table(entries.iter().map(|e| ((e.k, e.l), e.dollars))).map_err(invalid),
    }
}

/// Pairs, top choice and full ranking over all alternatives, keeping those
/// the cost model prices.
fn default_templates(m: usize, costs: &CostModel) -> Vec<(usize, usize)> {
    let mut out = vec![(1, 2)];
    for t in [(1, m), (m - 1, m)] {
        if !out.contains(&t) && costs.cost_of(t.0, t.1).is_ok() {
            out.push(t);
        }
    }
    out
}

fn names_or(
    given: &Option<Vec<String>>,
    n: usize,
    what: &str,
    default: impl Fn(usize) -> String,
) -> Result<Vec<String>> {
    match given {
        Some(v) if v.len() == n => Ok(v.clone()),
        Some(v) => Err(ServiceError::InvalidRequest(format!(
            "{} {what} given, expected {n}",
            v.len()
        ))),
        None => Ok((0..n).map(default).collect()),
    }
}

impl Session {
    /// Validates the request, fits the initial posterior and selects the first question.
    pub fn create(id: String, request: &CreateSession) -> Result<Self> {
        let (scenario, truth) = request.scenario.clone().into_parts().map_err(invalid)?;
        let m = scenario.num_alternatives();
        let attribute_names = names_or(&request.attribute_names, scenario.alt_dim(), "attribute names", |i| {
            format!("attr{}", i + 1)
        })?;
        let labels = names_or(&request.labels, m, "labels", |i| format!("alternative {i}"))?;
        let spec: CriterionSpec = request.criterion.parse().map_err(invalid)?;
        let costs = cost_model(&request.cost_model)?;
        let templates = request
            .templates
            .clone()
            .unwrap_or_else(|| default_templates(m, &costs));
        let policy = request.subsets.clone().unwrap_or(SubsetPolicy::Sampled {
            count: DEFAULT_SUBSET_COUNT,
            seed: request.seed,
        });
        let designs = build_design_space(&scenario, &templates, &policy).map_err(invalid)?;
        let init = request
            .init_data
            .iter()
            .map(|a| {
                Response::new(
                    a.agent,
                    Question::new(a.subset.clone(), a.ranking.len())?,
                    a.ranking.clone(),
                )
            })
            .collect::<elicit_core::Result<Dataset>>()
            .map_err(invalid)?;
        let cfg = EngineConfig {
            seed: request.seed,
            ground_truth: truth,
            ..EngineConfig::default()
        };
        let scenario = Arc::new(scenario);
        let engine =
            Elicitation::new(scenario.clone(), designs, &costs, spec, request.budget, init, cfg).map_err(invalid)?;
        let pending = engine.propose()?;
        Ok(Self {
            id,
            budget: request.budget,
            criterion: request.criterion.clone(),
            attribute_names,
            labels,
            scenario,
            engine,
            pending,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Token of the pending question; it names the session and the iteration,
    /// so it survives replay from the event log.
    pub fn token(&self) -> Option<String> {
        self.pending
            .as_ref()
            .map(|_| format!("{}-q{}", self.id, self.engine.iteration() + 1))
    }

    /// Rejects answers that cannot apply to the pending question.
    pub fn check(&self, answer: &SubmitAnswer) -> Result<Response> {
        let pending = self.pending.as_ref().ok_or(ServiceError::Finished)?;
        if self.token().as_deref() != Some(answer.token.as_str()) {
            return Err(ServiceError::StaleToken(answer.token.clone()));
        }
        Response::new(
            pending.design.agent,
            pending.design.question.clone(),
            answer.ranking.clone(),
        )
        .map_err(|e| ServiceError::InvalidAnswer(e.to_string()))
    }

    /// Computes the state after `answer` without changing this session.
    pub fn prepare(&self, answer: &SubmitAnswer) -> Result<Prepared> {
        let response = self.check(answer)?;
        let slot = self.pending.as_ref().map(|p| p.slot).ok_or(ServiceError::Finished)?;
        let mut engine = self.engine.clone();
        engine.record(slot, response)?;
        let pending = engine.propose()?;
        Ok(Prepared { engine, pending })
    }

    pub fn commit(&mut self, next: Prepared) {
        self.engine = next.engine;
        self.pending = next.pending;
    }

    pub fn engine(&self) -> &Elicitation {
        &self.engine
    }

    pub fn view(&self) -> Result<SessionView> {
        let snap = self.engine.current()?;
        let question = match (&self.pending, self.token()) {
            (Some(p), Some(token)) => Some(QuestionView {
                token,
                agent: p.design.agent,
                alternatives: p
                    .design
                    .question
                    .subset()
                    .iter()
                    .map(|&id| self.alternative(id))
                    .collect(),
                k: p.design.question.depth(),
                cost: p.cost,
                remaining_budget: self.engine.remaining_budget(),
            }),
            _ => None,
        };
        Ok(SessionView {
            id: self.id.clone(),
            state: if question.is_some() {
                SessionState::AwaitingAnswer
            } else {
                SessionState::Finished
            },
            criterion: self.criterion.clone(),
            iteration: self.engine.iteration(),
            budget: self.budget,
            spent: self.engine.spent(),
            remaining_budget: self.engine.remaining_budget(),
            question,
            criterion_value: snap.criterion_value,
            plurality: snap.plurality.probabilities().to_vec(),
            borda: snap.borda.probabilities().to_vec(),
            prediction: self.engine.prediction()?,
            posterior_mean: self.engine.posterior().mean().iter().copied().collect(),
        })
    }

    fn alternative(&self, id: usize) -> AlternativeView {
        AlternativeView {
            id,
            label: self.labels[id].clone(),
            attributes: self
                .attribute_names
                .iter()
                .zip(&self.scenario.alternatives()[id].attributes)
                .map(|(name, &value)| NamedValue {
                    name: name.clone(),
                    value,
                })
                .collect(),
        }
    }
}
