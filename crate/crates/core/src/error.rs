use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments violate an operation's precondition (shape mismatch, bad index, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed byte stream. `offset` is the byte position where parsing failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// A value failed validation at a specific pixel.
    #[error("invalid value at pixel (row {row}, col {col}): {message}")]
    Validation {
        row: usize,
        col: usize,
        message: String,
    },

    /// A configuration parameter is out of its allowed range.
    #[error("config error: {0}")]
    Config(String),

    /// A scene or config file entry is invalid. `field` names the offending key.
    #[error("spec error in `{field}`: {message}")]
    Spec { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn spec(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Spec {
            field: field.into(),
            message: msg.into(),
        }
    }

    /// True for errors caused by malformed input data rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
