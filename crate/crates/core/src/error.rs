use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate link: |mu| = {mu:e} is below 1e-12")]
    DegenerateLink { mu: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("prior is incompatible with regularizer: {0}")]
    IncompatiblePrior(String),

    #[error("invalid delta {0}: least-squares asymptote needs delta > 1")]
    InvalidDelta(f64),

    #[error("invalid ratio: {0}")]
    InvalidRatio(String),

    #[error("max-min program has no interior solution: {0}")]
    NoInteriorSolution(String),

    #[error("fixed-point solve diverged: {0}")]
    FixedPointDiverged(String),

    #[error("not converged after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("degenerate quantizer design: |mu| = {mu:e}")]
    DegenerateDesign { mu: f64 },

    #[error("matrix is singular or rank deficient")]
    SingularMatrix,

    #[error("invalid quantizer design: {0}")]
    InvalidDesign(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input (config, arguments) rather than
    /// numerical or IO failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::InvalidArgument(_)
                | Error::InvalidDesign(_)
                | Error::IncompatiblePrior(_)
                | Error::InvalidDelta(_)
                | Error::InvalidRatio(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
