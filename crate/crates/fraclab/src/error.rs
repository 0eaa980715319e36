use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: expected {expected}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        expected: &'static str,
    },

    #[error("{what}: radius {radius} exceeds grid limit {limit}")]
    OutOfDomain {
        what: &'static str,
        radius: f64,
        limit: f64,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("grids do not match: {0}")]
    GridMismatch(&'static str),

    #[error("quadrature did not converge: achieved {achieved:e}, target {target:e}")]
    Quadrature { achieved: f64, target: f64 },

    #[error("{stage}: no convergence after {} iterations (last residual {:e})", residuals.len(), residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence {
        stage: &'static str,
        residuals: Vec<f64>,
    },

    #[error("{stage}: iterates diverged at damping {damping}; retry with a smaller damping")]
    Divergence { stage: &'static str, damping: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("test-function basis rejected: {0}")]
    Basis(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The innermost error beneath any stage context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: impl ToString, expected: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value: value.to_string(),
        expected,
    }
}
