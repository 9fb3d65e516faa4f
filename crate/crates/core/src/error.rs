use thiserror::Error;

use crate::search::Hypothesis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("model does not support {0}")]
    UnsupportedCapability(&'static str),

    /// A model, corpus or constraint file could not be parsed. `location` is
    /// either a `line L, column C` pair or a path into the document.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("enumeration budget exceeded: {required} sequences > cap {cap}")]
    BudgetExceeded { required: u128, cap: u128 },

    /// Every candidate was pruned. Carries the best violating hypothesis, if
    /// any was seen, for diagnostics.
    #[error("every candidate was pruned by constraint violation")]
    EmptyBeam {
        best_violating: Option<Box<Hypothesis>>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            location: format!("line {}, column {}", err.line(), err.column()),
            message: err.to_string(),
        }
    }
}
