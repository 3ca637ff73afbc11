use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    /// A call that is well-formed but not allowed in the current mode.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-finite loss or gradient at step {step}")]
    Diverged { step: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! validation {
    ($($arg:tt)*) => {
        $crate::error::Error::Validation(alloc::format!($($arg)*))
    };
}

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Config(alloc::format!($($arg)*))
    };
}

pub(crate) use config_err;
pub(crate) use validation;
