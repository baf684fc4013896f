use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    InvalidInput(String),
    /// A non-finite value appeared while evaluating or differentiating a network.
    Numeric { layer: usize, context: &'static str },
    /// A batch could not be composed because a required buffer is empty.
    Composition { buffer: &'static str },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Numeric { layer, context } => {
                write!(f, "non-finite value in layer {layer} during {context}")
            }
            Error::Composition { buffer } => {
                write!(f, "cannot compose batch: buffer `{buffer}` is empty")
            }
        }
    }
}

impl core::error::Error for Error {}
