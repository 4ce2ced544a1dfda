use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{} of {total} runs failed", failures.len())]
    Partial {
        total: usize,
        /// `(entry name, message)` per failed run.
        failures: Vec<(String, String)>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Partial { .. } => EXIT_PARTIAL,
        }
    }
}

impl From<wdsm::Error> for CliError {
    fn from(e: wdsm::Error) -> Self {
        match e {
            wdsm::Error::NonFinite(_) | wdsm::Error::Diverged { .. } => CliError::Numerical(e.to_string()),
            wdsm::Error::Io(msg) => CliError::Config(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
