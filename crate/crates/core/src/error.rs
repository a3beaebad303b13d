use thiserror::Error;

#[derive(Debug, Error)]
pub enum HallError {
    /// Invalid model, configuration or request.
    #[error("validation error: {0}")]
    Validation(String),
    /// A numerical routine failed or a gap/degeneracy guard tripped.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HallError>;
