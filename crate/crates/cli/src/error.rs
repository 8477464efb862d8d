use std::path::Path;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or input files: exit 2.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Library(#[from] lpme::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use lpme::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Library(e) => match e.root() {
                E::InvalidInput(_)
                | E::UnsupportedDimension(_)
                | E::UndefinedAngle
                | E::TooFewTimePoints
                | E::FixedGammaRequired(_)
                | E::UnknownCase(_) => 2,
                _ => 3,
            },
        }
    }
}
