use thiserror::Error;

/// Errors produced by mesh construction, assembly and the dispersion analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("degenerate element: {0}")]
    DegenerateElement(String),

    #[error("unsupported quadrature degree {degree} for a {dim}-simplex")]
    UnsupportedDegree { dim: usize, degree: usize },

    #[error("nodal interpolation matrix is singular for rule {0}")]
    SingularInterpolation(String),

    #[error("mass matrix is not symmetric positive definite")]
    MassNotPositiveDefinite,

    #[error("time step too large: stability polynomial value {0} outside [-1, 1]")]
    Unstable(f64),

    #[error("wave vector must be nonzero")]
    ZeroWaveVector,

    #[error("unresolved wave: {0}")]
    Unresolved(String),

    #[error("eigen solver failed: {0}")]
    Eigen(String),

    #[error("rule data: {0}")]
    RuleData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
