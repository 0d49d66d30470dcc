use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("check failure: {0}")]
    Check(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<torusflux::Error> for CliError {
    fn from(e: torusflux::Error) -> Self {
        use torusflux::Error as E;
        match e {
            E::Io(_) | E::Format(_) | E::Json(_) => CliError::Io(e.to_string()),
            E::InvalidGrid(_)
            | E::OutOfRange { .. }
            | E::Exponent { .. }
            | E::MollifierUnderResolved { .. }
            | E::UnresolvedScale { .. }
            | E::InsufficientResolution(_)
            | E::TooFewScales(_) => CliError::Config(e.to_string()),
            _ => CliError::Check(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
