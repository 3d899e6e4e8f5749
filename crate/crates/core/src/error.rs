use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch in layer {layer}: expected {expected}, found {found}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        found: String,
    },

    #[error("parameter vector has length {found}, architecture needs {expected}")]
    ParamLength { expected: usize, found: usize },

    #[error("non-finite value in layer {layer} (parameter norm {param_norm:e})")]
    NonFinite { layer: usize, param_norm: f64 },

    #[error("non-finite objective at outer iteration {iteration}: {value}")]
    NonFiniteObjective { iteration: usize, value: f64 },

    #[error("label {0} is not a margin label; expected -1 or +1")]
    InvalidLabel(f64),

    #[error("empty dataset")]
    EmptyData,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown target function f{0}; expected 1..=6")]
    UnknownFunction(usize),

    #[error("variance estimate {0} is not positive")]
    DegenerateVariance(f64),

    #[error("precondition violated: delta = {delta} must exceed tau * zeta = {threshold}")]
    CoveringThreshold { delta: f64, threshold: f64 },

    #[error("activation {0} has no expansion point with nonzero first and second derivative")]
    NotLocallyQuadratic(String),

    #[error("identity construction did not reach epsilon = {epsilon} (best error {best})")]
    IdentityNotReached { epsilon: f64, best: f64 },

    #[error("every grid point failed: {0}")]
    AllGridPointsFailed(String),

    #[error("replicate {replicate}, estimator {estimator}: {source}")]
    Replicate {
        replicate: usize,
        estimator: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
