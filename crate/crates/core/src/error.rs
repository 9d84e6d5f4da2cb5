use alloc::string::String;
use core::fmt;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value that must be finite was NaN or infinite.
    NonFinite(&'static str),
    /// Operand shapes are incompatible for the named operation.
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A configuration value violates its contract.
    Config(String),
    /// Random placement could not satisfy the layout constraints.
    Placement(&'static str),
    /// One action per agent is required.
    ActionCount { expected: usize, got: usize },
    /// A precondition on the arguments was not met.
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Shape { op, left, right } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Placement(what) => write!(f, "could not place {what} after bounded retries"),
            Error::ActionCount { expected, got } => {
                write!(f, "expected {expected} actions, got {got}")
            }
            Error::Invalid(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for Error {}
