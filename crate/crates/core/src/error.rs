use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum LosError {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("data out of domain at row {row}: {reason}")]
    DataDomain { row: usize, reason: String },

    #[error("truncation cap of {cap} terms exceeded (accumulated mass {mass})")]
    Truncation { cap: usize, mass: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schema error at row {row}, field `{field}`: {reason}")]
    Schema {
        row: usize,
        field: String,
        reason: String,
    },

    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("model density is zero at row {row} (y = {y})")]
    DegeneratePoint { row: usize, y: f64 },

    #[error("component `{0}` received zero total weight")]
    ComponentStarvation(&'static str),

    #[error("initialization failed: {0}")]
    Init(String),

    #[error("degenerate data for {family} fit: {reason}")]
    DegenerateFit { family: String, reason: String },

    #[error("model validity: {0}")]
    ModelValidity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T, E = LosError> = std::result::Result<T, E>;

impl LosError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LosError::ParameterDomain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LosError::Io {
            path: path.into(),
            source,
        }
    }
}
