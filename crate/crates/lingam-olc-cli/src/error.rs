use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("{}: {e}", path.display()))
    }
}

/// Classifies library errors by whether the caller's input is at fault.
impl From<lingam_olc::Error> for CliError {
    fn from(e: lingam_olc::Error) -> Self {
        use lingam_olc::Error as E;
        match e {
            E::Parse(_) | E::Shape(_) | E::LabelMismatch(_) | E::SampleSize { .. } => CliError::Input(e.to_string()),
            E::InvalidArgument(_) | E::UnsupportedOrder(_) | E::Constraint(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
