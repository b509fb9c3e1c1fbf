use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An iterative routine failed to converge.
    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },
    /// Internal or cross-object consistency violated (bad POVM, probabilities not summing to one, ...).
    #[error("consistency violation: {0}")]
    Consistency(String),
    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure_arg {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::Error::Argument(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure_arg;
