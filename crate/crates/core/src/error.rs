use thiserror::Error;

/// Errors raised by the energy pipelines and their building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid point for {space}: expected {expected} coordinates, got {got}")]
    InvalidPoint {
        space: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("map `{label}` failed at x = {x:?}: {reason}")]
    MapEvaluation {
        label: String,
        x: Vec<f64>,
        reason: String,
    },

    #[error(
        "finite-difference stencil at x = {x:?} with step {delta} leaves the evaluable region"
    )]
    StencilOutOfRange { x: Vec<f64>, delta: f64 },

    #[error("point x = {x:?} is not in the inner domain for h = {h}")]
    OutOfInnerDomain { x: Vec<f64>, h: f64 },

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("unsupported dimension {n}: {reason}")]
    UnsupportedDimension { n: usize, reason: String },

    #[error("extrapolation needs at least 3 samples with strictly decreasing h, got {0}")]
    InsufficientData(usize),

    #[error("invalid configuration: field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("unknown {kind} `{spec}`")]
    UnknownSpec { kind: &'static str, spec: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
