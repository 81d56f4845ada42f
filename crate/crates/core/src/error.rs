use thiserror::Error;

/// Errors raised by the numerical modules and the scenario harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("metric is not positive definite at node {node}: {detail}")]
    MetricNotSpd { node: usize, detail: String },

    #[error("non-positive weight {value} at node {node}")]
    NonPositiveWeight { node: usize, value: f64 },

    #[error("field length {got} does not match expected {expected}")]
    Shape { expected: usize, got: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("solver breakdown in {solver}: {detail}")]
    Breakdown { solver: &'static str, detail: String },

    #[error("invariant density has negative entry {value:e} at node {node}; increase resolution")]
    NegativeDensity { node: usize, value: f64 },

    #[error("principal eigenvector is not positive (min entry {min:e})")]
    NotPerron { min: f64 },

    #[error("h outside computable range: tilt norm {norm} exceeds c_max {c_max}")]
    OutOfRange { norm: f64, c_max: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

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
}

impl Error {
    /// Wrap an error with the name of the module or stage that produced it.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
