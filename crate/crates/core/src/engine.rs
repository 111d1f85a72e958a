//! The budgeted elicitation loop.
//!
//! [`Elicitation`] is the loop as a state machine: pick the most
//! cost-effective design, accept its answer, refit. [`run_elicitation`]
//! drives it with an [`AnswerOracle`]; the session service drives it with
//! answers arriving over HTTP.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{self, CriterionSpec};
use crate::design::{self, CostModel, Design, GainConfig, Selection, BUDGET_EPS};
use crate::error::{Error, Result};
use crate::model::{Dataset, Parameter, Question, Response, Scenario};
use crate::pl;
use crate::posterior::{self, FitConfig, GaussianPosterior};
use crate::seed::{self, tags};
use crate::voting::{self, WinnerDistribution};

pub trait AnswerOracle {
    fn answer(&mut self, scenario: &Scenario, design: &Design) -> Result<Response>;
}

/// Answers sampled from a hidden ground-truth parameter.
pub struct SimulatedOracle {
    truth: Parameter,
    rng: ChaCha8Rng,
}

impl SimulatedOracle {
    pub fn new(truth: Parameter, seed: u64) -> Self {
        Self {
            truth,
            rng: seed::rng(seed),
        }
    }
}

impl AnswerOracle for SimulatedOracle {
    fn answer(&mut self, scenario: &Scenario, design: &Design) -> Result<Response> {
        pl::sample_response(scenario, design.agent, &design.question, &self.truth, &mut self.rng)
    }
}

/// Replays recorded rankings in order.
pub struct ScriptedOracle {
    answers: VecDeque<Vec<usize>>,
}

impl ScriptedOracle {
    pub fn new(answers: impl IntoIterator<Item = Vec<usize>>) -> Self {
        Self {
            answers: answers.into_iter().collect(),
        }
    }
}

impl AnswerOracle for ScriptedOracle {
    fn answer(&mut self, _scenario: &Scenario, design: &Design) -> Result<Response> {
        let ranking = self
            .answers
            .pop_front()
            .ok_or_else(|| Error::Oracle("script exhausted".into()))?;
        Response::new(design.agent, design.question.clone(), ranking)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub fit: FitConfig,
    pub gain: GainConfig,
    /// Parent of the per-iteration Monte Carlo and random-pick streams.
    pub seed: u64,
    /// When known, every snapshot reports total variation against it.
    pub ground_truth: Option<Parameter>,
    /// Length of the predicted ranking reported for a single key agent; all
    /// alternatives when unset.
    pub prediction_depth: Option<usize>,
}

/// Aggregates of one posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub criterion_value: f64,
    pub plurality: WinnerDistribution,
    pub borda: WinnerDistribution,
    pub tv_plurality: Option<f64>,
    pub tv_borda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub index: usize,
    pub design: Design,
    pub cost: f64,
    pub cumulative_cost: f64,
    pub response: Response,
    /// Criterion at the posterior refitted after this answer.
    pub criterion_value: f64,
    pub winner_plurality: WinnerDistribution,
    pub winner_borda: WinnerDistribution,
    pub tv_plurality: Option<f64>,
    pub tv_borda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// Single key agent: alternatives by posterior-mean utility.
    Ranking(Vec<usize>),
    /// Key group: randomized plurality and Borda.
    Winners {
        plurality: WinnerDistribution,
        borda: WinnerDistribution,
    },
}

#[derive(Debug, Clone)]
pub struct ElicitationResult {
    pub initial: Snapshot,
    pub trace: Vec<IterationRecord>,
    pub final_posterior: GaussianPosterior,
    pub data: Dataset,
    pub output: Prediction,
}

#[derive(Debug, Clone, Error)]
#[error("elicitation aborted after {} iterations: {source}", trace.len())]
pub struct ElicitationError {
    #[source]
    pub source: Error,
    pub trace: Vec<IterationRecord>,
}

/// A design proposed for querying, identified by its slot in the remaining set.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub slot: usize,
    pub design: Design,
    pub cost: f64,
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct Elicitation {
    scenario: Arc<Scenario>,
    spec: CriterionSpec,
    cfg: EngineConfig,
    budget: f64,
    spent: f64,
    designs: Vec<Design>,
    costs: Vec<f64>,
    data: Dataset,
    posterior: GaussianPosterior,
    initial: Snapshot,
    trace: Vec<IterationRecord>,
    truth: Option<(WinnerDistribution, WinnerDistribution)>,
}

impl Elicitation {
    pub fn new(
        scenario: Arc<Scenario>,
        designs: Vec<Design>,
        cost_model: &CostModel,
        spec: CriterionSpec,
        budget: f64,
        init_data: Dataset,
        cfg: EngineConfig,
    ) -> Result<Self> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(Error::Config(format!("budget must be non-negative, got {budget}")));
        }
        if scenario.n_key() == 0 {
            return Err(Error::Config("at least one key agent is required".into()));
        }
        spec.validate(&scenario)?;
        cfg.fit.validate()?;
        cfg.gain.validate()?;
        for r in init_data.entries() {
            scenario.check_response(r)?;
        }
        let costs = designs
            .iter()
            .map(|d| cost_model.cost(&d.question))
            .collect::<Result<Vec<_>>>()?;
        let truth = match &cfg.ground_truth {
            Some(b) => Some((
                voting::plurality_winner_dist(&scenario, b)?,
                voting::borda_winner_dist(&scenario, b)?,
            )),
            None => None,
        };
        let zero = Parameter::zeros(scenario.alt_dim(), scenario.agent_dim());
        let posterior = refit(&scenario, &init_data, &zero, &cfg.fit)?;
        let mut this = Self {
            initial: snapshot(&scenario, &spec, &posterior, truth.as_ref())?,
            scenario,
            spec,
            cfg,
            budget,
            spent: 0.0,
            designs,
            costs,
            data: init_data,
            posterior,
            trace: Vec::new(),
            truth,
        };
        this.prune();
        Ok(this)
    }

    fn prune(&mut self) {
        let remaining = self.remaining_budget();
        let mut keep = self.costs.iter().map(|c| *c <= remaining + BUDGET_EPS);
        self.designs.retain(|_| keep.next().unwrap());
        self.costs.retain(|c| *c <= remaining + BUDGET_EPS);
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn spec(&self) -> &CriterionSpec {
        &self.spec
    }

    pub fn remaining_budget(&self) -> f64 {
        (self.budget - self.spent).max(0.0)
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn iteration(&self) -> usize {
        self.trace.len()
    }

    pub fn posterior(&self) -> &GaussianPosterior {
        &self.posterior
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn designs(&self) -> &[Design] {
        &self.designs
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    pub fn initial(&self) -> &Snapshot {
        &self.initial
    }

    pub fn is_finished(&self) -> bool {
        self.designs.is_empty()
    }

    /// Snapshot of the current posterior.
    pub fn current(&self) -> Result<Snapshot> {
        match self.trace.last() {
            None => Ok(self.initial.clone()),
            Some(r) => Ok(Snapshot {
                criterion_value: r.criterion_value,
                plurality: r.winner_plurality.clone(),
                borda: r.winner_borda.clone(),
                tv_plurality: r.tv_plurality,
                tv_borda: r.tv_borda,
            }),
        }
    }

    /// The next design to query, or `None` when nothing is affordable.
    /// Deterministic given the configuration seed and the history.
    pub fn propose(&self) -> Result<Option<Proposal>> {
        let iteration = self.iteration() as u64;
        let gain_cfg = GainConfig {
            seed: seed::fold(self.cfg.seed, [tags::MONTE_CARLO, iteration]),
            ..self.cfg.gain
        };
        let mut pick_rng = seed::rng(seed::fold(self.cfg.seed, [tags::RANDOM_PICK, iteration]));
        let sel = design::select_design(
            &self.scenario,
            &self.designs,
            &self.costs,
            &self.posterior,
            &self.spec,
            self.remaining_budget(),
            &gain_cfg,
            &mut pick_rng,
        )?;
        Ok(sel.map(|Selection { index, cost, gain }| Proposal {
            slot: index,
            design: self.designs[index].clone(),
            cost,
            gain,
        }))
    }

    /// Accepts the answer to the design in `slot`. On error nothing changes.
    pub fn record(&mut self, slot: usize, response: Response) -> Result<&IterationRecord> {
        let design = self
            .designs
            .get(slot)
            .ok_or_else(|| Error::Domain(format!("no remaining design in slot {slot}")))?
            .clone();
        if response.agent() != design.agent || response.question() != &design.question {
            return Err(Error::Domain("response does not answer the queried design".into()));
        }
        let cost = self.costs[slot];
        let mut data = self.data.clone();
        data.push(response.clone());
        let posterior = refit(&self.scenario, &data, &self.posterior.mean_parameter(), &self.cfg.fit)?;
        let snap = snapshot(&self.scenario, &self.spec, &posterior, self.truth.as_ref())?;

        self.data = data;
        self.posterior = posterior;
        self.spent += cost;
        self.designs.remove(slot);
        self.costs.remove(slot);
        self.prune();
        self.trace.push(IterationRecord {
            index: self.trace.len() + 1,
            design,
            cost,
            cumulative_cost: self.spent,
            response,
            criterion_value: snap.criterion_value,
            winner_plurality: snap.plurality,
            winner_borda: snap.borda,
            tv_plurality: snap.tv_plurality,
            tv_borda: snap.tv_borda,
        });
        Ok(self.trace.last().expect("just pushed"))
    }

    /// Slot of a remaining design equal to `design`.
    pub fn slot_of(&self, design: &Design) -> Option<usize> {
        self.designs.iter().position(|d| d == design)
    }

    pub fn prediction(&self) -> Result<Prediction> {
        prediction(&self.scenario, &self.posterior, self.cfg.prediction_depth)
    }

    pub fn finish(self) -> Result<ElicitationResult> {
        let output = self.prediction()?;
        Ok(ElicitationResult {
            initial: self.initial,
            trace: self.trace,
            final_posterior: self.posterior,
            data: self.data,
            output,
        })
    }

    fn into_error(self, source: Error) -> ElicitationError {
        ElicitationError {
            source,
            trace: self.trace,
        }
    }
}

/// Fits from `init`; on non-convergence retries once from the zero parameter.
fn refit(scenario: &Scenario, data: &Dataset, init: &Parameter, cfg: &FitConfig) -> Result<GaussianPosterior> {
    match posterior::fit_posterior(scenario, data, init, cfg) {
        Err(Error::Convergence { .. }) => {
            let zero = Parameter::zeros(scenario.alt_dim(), scenario.agent_dim());
            posterior::fit_posterior(scenario, data, &zero, cfg)
        }
        other => other,
    }
}

fn snapshot(
    scenario: &Scenario,
    spec: &CriterionSpec,
    post: &GaussianPosterior,
    truth: Option<&(WinnerDistribution, WinnerDistribution)>,
) -> Result<Snapshot> {
    let mean = post.mean_parameter();
    let plurality = voting::plurality_winner_dist(scenario, &mean)?;
    let borda = voting::borda_winner_dist(scenario, &mean)?;
    let (tv_plurality, tv_borda) = match truth {
        Some((tp, tb)) => (
            Some(voting::total_variation(tp, &plurality)?),
            Some(voting::total_variation(tb, &borda)?),
        ),
        None => (None, None),
    };
    Ok(Snapshot {
        criterion_value: criteria::evaluate(spec, scenario, post)?,
        plurality,
        borda,
        tv_plurality,
        tv_borda,
    })
}

fn prediction(scenario: &Scenario, post: &GaussianPosterior, depth: Option<usize>) -> Result<Prediction> {
    if scenario.n_key() == 1 {
        let mut ranking = criteria::ranking_by_mean(scenario, post, 0)?;
        if let Some(k) = depth {
            ranking.truncate(k.max(1));
        }
        Ok(Prediction::Ranking(ranking))
    } else {
        let mean = post.mean_parameter();
        Ok(Prediction::Winners {
            plurality: voting::plurality_winner_dist(scenario, &mean)?,
            borda: voting::borda_winner_dist(scenario, &mean)?,
        })
    }
}

/// Runs the loop to exhaustion of the affordable design set.
#[allow(clippy::too_many_arguments)]
pub fn run_elicitation(
    scenario: Arc<Scenario>,
    designs: Vec<Design>,
    cost_model: &CostModel,
    spec: CriterionSpec,
    budget: f64,
    init_data: Dataset,
    oracle: &mut dyn AnswerOracle,
    cfg: EngineConfig,
) -> std::result::Result<ElicitationResult, ElicitationError> {
    let mut state = Elicitation::new(scenario, designs, cost_model, spec, budget, init_data, cfg)
        .map_err(|source| ElicitationError { source, trace: vec![] })?;
    loop {
        let proposal = match state.propose() {
            Ok(Some(p)) => p,
            Ok(None) => break,
            Err(e) => return Err(state.into_error(e)),
        };
        let answer = oracle.answer(&state.scenario.clone(), &proposal.design);
        let result = answer.and_then(|r| state.record(proposal.slot, r).map(|_| ()));
        if let Err(e) = result {
            return Err(state.into_error(e));
        }
    }
    state
        .finish()
        .map_err(|source| ElicitationError { source, trace: vec![] })
}

/// `count` pairwise answers from uniformly drawn regular agents and pairs.
pub fn initialize_data<R: Rng + ?Sized>(
    scenario: &Scenario,
    count: usize,
    rng: &mut R,
    truth: &Parameter,
) -> Result<Dataset> {
    let regular = scenario.regular_agents();
    if count > 0 && regular.is_empty() {
        return Err(Error::Config("no regular agents to initialize from".into()));
    }
    let m = scenario.num_alternatives();
    let mut data = Dataset::new();
    for _ in 0..count {
        let agent = regular[rng.random_range(0..regular.len())].id;
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let q = Question::pairwise(a, b)?;
        data.push(pl::sample_response(scenario, agent, &q, truth, rng)?);
    }
    Ok(data)
}
