use std::fmt;

pub type CliResult<T> = Result<T, CliError>;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or values rejected by the library. Exit code 1.
    Invalid(String),
    /// One or more acceptance criteria failed. Exit code 1.
    Criteria(String),
    /// Unreadable, unwritable or malformed files. Exit code 2.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Criteria(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "error: {m}"),
            CliError::Criteria(m) => write!(f, "acceptance failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<thermal_muscle::Error> for CliError {
    fn from(e: thermal_muscle::Error) -> Self {
        if e.is_io_or_parse() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
