use thiserror::Error;

/// Failure of a service operation. Each variant maps to one HTTP status.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    /// Bad request body or configuration (400).
    #[error("{0}")]
    Invalid(String),
    /// The source could not be opened (400).
    #[error("source: {0}")]
    Source(String),
    /// No such session (404).
    #[error("no session `{0}`")]
    NotFound(String),
    /// State conflict: ended session, tag order, capacity, or a report
    /// asked of a session that cannot produce one (409).
    #[error("{0}")]
    Conflict(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status_code(&self) -> u16 {
        match self {
            ServiceError::Invalid(_) | ServiceError::Source(_) => 400,
            ServiceError::NotFound(_) => 404,
            ServiceError::Conflict(_) => 409,
            ServiceError::Internal(_) => 500,
        }
    }
}

impl From<vigil_core::ConfigError> for ServiceError {
    fn from(e: vigil_core::ConfigError) -> Self {
        ServiceError::Invalid(e.to_string())
    }
}
