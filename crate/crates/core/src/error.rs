use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("validation error in {context}: {message}")]
    Validation { context: String, message: String },

    #[error("unsupported topology at node `{node}`: {message}")]
    UnsupportedTopology { node: String, message: String },

    #[error("unknown network `{0}`")]
    UnknownNetwork(String),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid compression: {0}")]
    InvalidCompression(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("design infeasible at layer `{layer}`: {constraint}")]
    DesignInfeasible { layer: String, constraint: String },

    #[error("no feasible design: binding constraint {0}")]
    NoFeasibleDesign(String),

    #[error("index {index} out of range for space of cardinality {cardinality}")]
    IndexOutOfRange { index: u128, cardinality: u128 },

    #[error("search space too large: {0}")]
    SpaceTooLarge(String),

    #[error("evaluator error: {0}")]
    Evaluator(String),

    #[error("protocol error: {message} (raw line: {raw:?})")]
    Protocol { message: String, raw: String },

    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn topology(node: impl Into<String>, message: impl Into<String>) -> Self {
        Error::UnsupportedTopology {
            node: node.into(),
            message: message.into(),
        }
    }
}
