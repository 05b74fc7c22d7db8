use thiserror::Error;

/// Errors surfaced by the solvers. Each variant maps to a stable machine-readable code.
#[derive(Debug, Error)]
pub enum EkblError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("smallness violated: {0}")]
    SmallnessViolated(String),
    #[error("compatibility violated: {0}")]
    CompatViolated(String),
    #[error("Newton stagnation: {0}")]
    NewtonStagnation(String),
    #[error("quadrature failure: {0}")]
    QuadratureFail(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EkblError {
    pub fn code(&self) -> &'static str {
        match self {
            EkblError::Domain(_) => "DOMAIN",
            EkblError::SmallnessViolated(_) => "SMALLNESS_VIOLATED",
            EkblError::CompatViolated(_) => "COMPAT_VIOLATED",
            EkblError::NewtonStagnation(_) => "NEWTON_STAGNATION",
            EkblError::QuadratureFail(_) => "QUADRATURE_FAIL",
            EkblError::Config(_) => "CONFIG",
            EkblError::Shape(_) => "SHAPE",
            EkblError::Precondition(_) => "PRECONDITION",
            EkblError::Internal(_) => "INTERNAL",
            EkblError::Io(_) => "IO",
            EkblError::Json(_) => "JSON",
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            EkblError::Config(_) | EkblError::Json(_) | EkblError::Shape(_) => 2,
            EkblError::Io(_) => 3,
            EkblError::Domain(_) | EkblError::Precondition(_) => 4,
            EkblError::SmallnessViolated(_) => 10,
            EkblError::CompatViolated(_) => 11,
            EkblError::NewtonStagnation(_) => 12,
            EkblError::QuadratureFail(_) => 13,
            EkblError::Internal(_) => 70,
        }
    }
}

pub type Result<T> = std::result::Result<T, EkblError>;
