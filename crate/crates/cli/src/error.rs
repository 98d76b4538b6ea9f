use hsd_core::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable files, malformed JSON. Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Inputs that parse but fail a check (Betti expectation, hash, schema). Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Solver or training breakdown. Exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::ConvergenceFailure { .. }
            | Error::SolverFailure(_)
            | Error::NonFiniteGradient(_)
            | Error::NonFiniteLoss { .. }
            | Error::CflViolation(_)
            | Error::SingularSystem(_) => CliError::Numerical(msg),
            Error::Io(_) | Error::Json(_) | Error::Parse(_) => CliError::Usage(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
