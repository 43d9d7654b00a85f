use disk_billiard::Error;

/// Failures mapped onto the exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Domain(Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownFamily(_) | Error::InvalidInput(_) => CliError::Config(e.to_string()),
            Error::Inconsistent(m) => CliError::Verification(m),
            other => CliError::Domain(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
