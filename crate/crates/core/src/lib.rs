//! Budgeted adaptive preference elicitation.
//!
//! Agents with attribute vectors rank alternatives with attribute vectors
//! under a Plackett-Luce model whose utilities are bilinear in the two
//! profiles. Answers to top-k-of-l questions are fitted by composite
//! likelihood into a Gaussian posterior; each next question is the one with
//! the highest expected information gain per dollar; the posterior mean
//! feeds randomized plurality and Borda winner distributions.
//!
//! ```
//! use std::sync::Arc;
//! use elicit_core::{
//!     build_design_space, generate_scenario, initialize_data, run_elicitation, seed, CostModel,
//!     CriterionSpec, EngineConfig, ScenarioConfig, SimulatedOracle, SubsetPolicy,
//! };
//!
//! let (scenario, truth) = generate_scenario(&ScenarioConfig { m: 4, n_regular: 3, ..Default::default() })?;
//! let scenario = Arc::new(scenario);
//! let designs = build_design_space(&scenario, &[(1, 2), (3, 4)], &SubsetPolicy::default())?;
//! let init = initialize_data(&scenario, 10, &mut seed::rng(1), &truth)?;
//! let result = run_elicitation(
//!     scenario,
//!     designs,
//!     &CostModel::MturkHotels,
//!     "d-opt".parse::<CriterionSpec>()?,
//!     0.1,
//!     init,
//!     &mut SimulatedOracle::new(truth, 2),
//!     EngineConfig::default(),
//! )
//! .unwrap();
//! assert!(result.trace.last().unwrap().cumulative_cost <= 0.1);
//! # Ok::<(), elicit_core::Error>(())
//! ```

pub mod criteria;
pub mod design;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod model;
pub mod pl;
pub mod posterior;
pub mod scenario;
pub mod seed;
pub mod trace;
pub mod voting;

pub use criteria::{CriterionKind, CriterionSpec};
pub use design::{build_design_space, select_design, CostModel, Design, GainConfig, SubsetPolicy};
pub use engine::{
    initialize_data, run_elicitation, AnswerOracle, Elicitation, ElicitationError, ElicitationResult, EngineConfig,
    IterationRecord, Prediction, Proposal, ScriptedOracle, SimulatedOracle, Snapshot,
};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentResult};
pub use model::{AgentProfile, AlternativeProfile, Dataset, Group, Parameter, Question, Response, Scenario};
pub use posterior::{fit_posterior, FitConfig, GaussianPosterior};
pub use scenario::{generate_scenario, ScenarioConfig, ScenarioFile};
pub use voting::{Rule, WinnerDistribution};
