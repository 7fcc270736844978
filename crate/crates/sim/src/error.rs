use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("{method} failed in {failed} of {reps} replications (more than 10%)")]
    TooManyFailures { method: String, failed: usize, reps: usize },

    #[error(transparent)]
    Core(#[from] tiltfit_core::Error),
}
