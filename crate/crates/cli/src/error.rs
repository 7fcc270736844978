use std::path::PathBuf;

use thiserror::Error;
use tiltfit_sim::SimError;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures surfaced by the command-line tool, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for bad input data, 4 for numerical
    /// failures and 1 for anything else (output I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Output { .. } => 1,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output { path: path.into(), source }
    }
}

impl From<tiltfit_core::Error> for CliError {
    fn from(e: tiltfit_core::Error) -> Self {
        use tiltfit_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidHypothesis(_) | E::InvalidArgument(_) => CliError::Config(msg),
            E::InvalidDimension(_) | E::Layout { .. } | E::RankDeficient { .. } | E::NonFinite(_) => CliError::Data(msg),
            _ => CliError::Numerical(msg),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::NotPsd(_) => CliError::Config(e.to_string()),
            SimError::TooManyFailures { .. } => CliError::Numerical(e.to_string()),
            SimError::Core(inner) => inner.into(),
        }
    }
}
