use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    /// Names of the failing checks, or a description of a numerical failure.
    Check(Vec<String>),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Check(_) => EXIT_CHECK_FAILED,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Check(names) => write!(f, "failed checks: {}", names.join(", ")),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mixedness::Error> for CliError {
    fn from(e: mixedness::Error) -> Self {
        match e {
            mixedness::Error::Argument(_) | mixedness::Error::Format(_) => CliError::Usage(e.to_string()),
            other => CliError::Check(vec![other.to_string()]),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
