use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("backward already ran on this tape; call reset_grads first")]
    DoubleBackward,

    #[error("gradients missing for parameter {0}; run backward first")]
    MissingGrad(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid config: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("model has {params} parameters, above the Hessian cap of {cap}")]
    OverCap { params: usize, cap: usize },

    #[error("matrix is not symmetric positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotSpd { min_eigenvalue: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("did not converge: gradient norm {grad_norm:e} after {iterations} iterations")]
    NonConvergence { grad_norm: f64, iterations: usize },

    #[error("requested {requested} items but only {available} available")]
    Budget { requested: usize, available: usize },

    #[error("label leak: {0} unlabeled labels read outside a probe")]
    LabelLeak(usize),

    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data format: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("missing artifacts in {dir}: expected {expected:?}")]
    MissingArtifacts { dir: String, expected: Vec<String> },

    #[error("mixed config hashes in {0}")]
    MixedArtifacts(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn in_cycle(self, cycle: usize) -> Self {
        Error::Cycle {
            cycle,
            source: Box::new(self),
        }
    }
}
