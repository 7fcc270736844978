use thiserror::Error;

use crate::optimizer::PetFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("observation layout mismatch: expected {expected} values, got {got}")]
    Layout { expected: usize, got: usize },

    #[error("rank-deficient instrument matrix: {deficient} of {columns} columns are linearly dependent")]
    RankDeficient { deficient: usize, columns: usize },

    #[error("structural matrix (I - U) is singular")]
    SingularStructure,

    #[error("parameter outside model domain: {0}")]
    Domain(String),

    #[error("active set must be nonempty")]
    EmptyActiveSet,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("zero is not in the convex hull of the moment vectors")]
    ConvexHullViolation,

    #[error("dual Hessian is numerically singular after ridge escalation")]
    Conditioning,

    #[error("dual solution has not converged at the supplied parameter")]
    StaleDual,

    #[error("outer optimization stalled after {} iterations", .best.outer_iterations)]
    Stalled { best: Box<PetFit> },

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("singular information matrix; offending columns {0:?}")]
    SingularInformation(Vec<usize>),

    #[error("degenerate effective degrees of freedom: e = {e} with n = {n}")]
    DegenerateDf { e: f64, n: usize },

    #[error("inconsistent fit: {df} nonzero coefficients exceed dimension {p}")]
    InconsistentFit { df: usize, p: usize },

    #[error("every fit on the tuning path failed: {}", format_failures(.0))]
    PathFailure(Vec<(f64, String)>),

    #[error("coordinate descent did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize, best: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn format_failures(failures: &[(f64, String)]) -> String {
    failures
        .iter()
        .map(|(g, e)| format!("gamma={g:.4e}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for failures caused by the data/parameter geometry rather than misuse.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvexHullViolation
                | Error::Conditioning
                | Error::Stalled { .. }
                | Error::SingularInformation(_)
                | Error::DegenerateDf { .. }
                | Error::NoConvergence { .. }
                | Error::PathFailure(_)
                | Error::SingularStructure
                | Error::RankDeficient { .. }
        )
    }
}
