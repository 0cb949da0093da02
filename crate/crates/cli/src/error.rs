use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_STUDY_FAILURE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent input, reported with its location.
    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] klsurv::Error),

    #[error("fit did not converge after {n_iter} iterations; model written and flagged")]
    NonConvergence { n_iter: usize },

    #[error("{failed} of {total} replicates failed; partial results written")]
    StudyFailure { failed: usize, total: usize },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Model(e) => match e {
                klsurv::Error::Dimension(_)
                | klsurv::Error::Alignment(_)
                | klsurv::Error::UnknownCovariate(_)
                | klsurv::Error::TauMismatch { .. }
                | klsurv::Error::InvalidData(_)
                | klsurv::Error::InvalidConfig(_)
                | klsurv::Error::NoEvents => EXIT_INPUT,
                _ => EXIT_RUNTIME,
            },
            CliError::Io { .. } => EXIT_RUNTIME,
            CliError::NonConvergence { .. } => EXIT_NONCONVERGENCE,
            CliError::StudyFailure { .. } => EXIT_STUDY_FAILURE,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
