use thiserror::Error;

pub type Result<T, E = DeerError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DeerError {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two point sources coincide, the dipolar kernel diverges.
    #[error("dipolar singularity: {0}")]
    Singularity(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    /// Timing or sweep constraint violated.
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical integrity: {0}")]
    NumericalIntegrity(String),

    #[error("accuracy not reached: {0}")]
    Accuracy(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("grid alignment: {0}")]
    Alignment(String),

    /// Every violation found while validating a configuration.
    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
