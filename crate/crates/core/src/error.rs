use thiserror::Error;

pub type Result<T, E = SegError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("empty domain")]
    EmptyDomain,
    #[error("empty region")]
    EmptyRegion,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("shooting bracket failure: {0}")]
    Bracket(String),
    #[error("constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("infeasible r: {0}")]
    InfeasibleR(String),
    #[error("component squeezed out: component {0} has an empty allowed region")]
    SqueezedOut(usize),
    #[error("component {0} annihilated by the cutoff")]
    Annihilated(usize),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SegError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SegError::InvalidInput(msg.into())
    }
}
