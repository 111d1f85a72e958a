use thiserror::Error;

use crate::model::Parameter;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Profiles, parameters or questions that do not fit together.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// An argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("response space has {count} outcomes, above the enumeration cap of {cap}")]
    TooLarge { count: u128, cap: usize },

    #[error("Newton ascent did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        last: Box<Parameter>,
    },

    #[error("no cost for question type (k={k}, l={l})")]
    Cost { k: usize, l: usize },

    #[error("answer oracle failed: {0}")]
    Oracle(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
