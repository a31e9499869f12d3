//! Error type shared by every module of the toolkit.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("input error: {0}")]
    Input(String),

    /// The input is well formed but carries no usable signal (constant
    /// series, graph without edges, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("fit did not converge after {iterations} iterations (best objective {best_objective}, params {best_params:?})")]
    Fit {
        iterations: usize,
        best_objective: f64,
        best_params: Vec<f64>,
    },

    #[error("order selection failed: {0}")]
    OrderSelection(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Capability(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Validation(_)
            | Error::Alignment(_)
            | Error::Input(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::Degenerate(_) | Error::Fit { .. } | Error::OrderSelection(_) => {
                ErrorClass::Numeric
            }
            Error::Context { source, .. } => source.class(),
        }
    }

    /// The innermost error, with every context layer peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Wraps the error with a human readable context (e.g. the scenario name).
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
