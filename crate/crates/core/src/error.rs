use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("degenerate body: {0}")]
    Degenerate(String),
    #[error("singular linear map")]
    SingularMap,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operation not supported for this body: {0}")]
    Unsupported(String),
    #[error("pair is not tractable: {0}; use the geometric-mean surrogate")]
    NotTractable(String),
    #[error("subspace hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("inner solver did not converge (residual {residual:e})")]
    SolverNonConvergence { residual: f64 },
    #[error("linear program is {0}")]
    LinearProgram(&'static str),
    #[error("rank deficient sample")]
    RankDeficient,
}

pub type Result<T> = std::result::Result<T, GeomError>;

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(GeomError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::NonFinite);
    }
    Ok(())
}
