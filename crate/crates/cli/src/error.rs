use std::path::PathBuf;

use recdenoise::Error as CoreError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const IO: i32 = 5;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Infeasible(_) => exit::CONFIG,
                CoreError::Io { .. } | CoreError::Checkpoint(_) => exit::IO,
                CoreError::Divergence { .. } | CoreError::NonFiniteGradient { .. } => exit::DIVERGENCE,
                CoreError::Parse { .. }
                | CoreError::Data(_)
                | CoreError::EmptyStore
                | CoreError::IndexOutOfRange { .. }
                | CoreError::NoNegativeCandidate { .. }
                | CoreError::NoPositive { .. }
                | CoreError::Unobserved { .. } => exit::DATA,
                CoreError::Shape(_) => exit::OTHER,
            },
        }
    }
}
