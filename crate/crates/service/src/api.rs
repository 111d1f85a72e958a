//! Request and response bodies.

use elicit_core::{Prediction, ScenarioFile, SubsetPolicy};
use serde::{Deserialize, Serialize};

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub scenario: ScenarioFile,
    /// Display names of the alternative attributes; `attr1..attrK` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_names: Option<Vec<String>>,
    /// Display labels of the alternatives; `alternative N` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub budget: f64,
    #[serde(default = "default_criterion")]
    pub criterion: String,
    #[serde(default)]
    pub cost_model: CostDoc,
    /// Question templates `(k, l)`; pairs, top choice and full ranking over
    /// all alternatives when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets: Option<SubsetPolicy>,
    /// Answers known before the session starts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub init_data: Vec<AnswerRecord>,
    #[serde(default)]
    pub seed: u64,
}

fn default_criterion() -> String {
    "mpc".into()
}

/// A named built-in cost model or an explicit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostDoc {
    Builtin(String),
    Table(Vec<CostEntry>),
}

impl Default for CostDoc {
    fn default() -> Self {
        CostDoc::Builtin(BUILTIN_COST_MODEL.into())
    }
}

pub const BUILTIN_COST_MODEL: &str = "mturk-hotels";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub k: usize,
    pub l: usize,
    pub dollars: f64,
}

/// A complete answer: which agent ranked the top `ranking.len()` of `subset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRecord {
    pub agent: usize,
    pub subset: Vec<usize>,
    pub ranking: Vec<usize>,
}

/// Body of `POST /sessions/{id}/answers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitAnswer {
    /// Token of the pending question.
    pub token: String,
    /// Alternative ids, most preferred first.
    pub ranking: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    AwaitingAnswer,
    Selecting,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeView {
    pub id: usize,
    pub label: String,
    pub attributes: Vec<NamedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    /// Must be echoed with the answer.
    pub token: String,
    pub agent: usize,
    /// The alternatives to consider, in presentation order.
    pub alternatives: Vec<AlternativeView>,
    /// How many of them to rank.
    pub k: usize,
    pub cost: f64,
    pub remaining_budget: f64,
}

/// Snapshot returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub state: SessionState,
    pub criterion: String,
    /// Answers accepted so far.
    pub iteration: usize,
    pub budget: f64,
    pub spent: f64,
    pub remaining_budget: f64,
    pub question: Option<QuestionView>,
    pub criterion_value: f64,
    pub plurality: Vec<f64>,
    pub borda: Vec<f64>,
    /// Predicted ranking for a single key agent, winner distributions for a group.
    pub prediction: Prediction,
    /// Posterior mean of the coefficients, in vectorized order.
    pub posterior_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable code.
    pub reason: String,
    pub message: String,
}
