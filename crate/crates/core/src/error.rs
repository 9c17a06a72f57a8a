use thiserror::Error;

/// Errors produced by the toolkit. Variants map one-to-one onto the CLI exit
/// codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("environment error: {0}")]
    Environment(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 I/O, 3 format, 4 contract. Usage errors (1) are
    /// raised by the argument parser before any of these can occur.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Environment(_) => 2,
            Error::Format(_) => 3,
            Error::Shape(_) | Error::Contract(_) | Error::Data(_) => 4,
        }
    }
}

impl Error {
    /// Prefixes I/O and format messages with the file they concern.
    pub(crate) fn at(self, path: &std::path::Path) -> Self {
        let p = path.display();
        match self {
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{p}: {e}"))),
            Error::Format(m) => Error::Format(format!("{p}: {m}")),
            other => other,
        }
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Format(other.to_string()),
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
macro_rules! contract_err {
    ($($arg:tt)*) => { $crate::error::Error::Contract(format!($($arg)*)) };
}
macro_rules! format_err {
    ($($arg:tt)*) => { $crate::error::Error::Format(format!($($arg)*)) };
}
pub(crate) use {contract_err, format_err, shape_err};
