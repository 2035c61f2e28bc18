use thiserror::Error;

/// Errors raised by the decomposition library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of bounds for mode {mode} of size {size}")]
    IndexOutOfBounds { mode: usize, index: usize, size: usize },

    #[error("duplicate coordinate {0:?}")]
    DuplicateCoordinate(Vec<usize>),

    #[error("non-positive value at entry {0}")]
    NonPositiveValue(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch(Vec<usize>, Vec<usize>),

    #[error("non-finite value encountered in {0}")]
    NonFiniteEncountered(&'static str),

    #[error("sample is empty")]
    EmptySample,

    #[error("tensor has no zero entries to sample")]
    DegenerateTensor,

    #[error("result set is empty")]
    EmptySet,

    #[error("division by zero: reference objective is 0")]
    DivisionByZero,

    #[error("unknown solver method `{0}`")]
    UnknownMethod(String),

    #[error("options of type {given} passed to method {method}")]
    OptionsTypeMismatch { method: &'static str, given: &'static str },

    #[error("budget j={j} outside [0, {total}]")]
    BudgetOutOfRange { j: usize, total: usize },

    #[error("requested density cannot be achieved for this shape")]
    DensityUnachievable,

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("non-integer value at line {0}")]
    NonIntegerValue(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl Error {
    /// Coarse classification used by the CLI to pick an exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteEncountered(_) | Error::DivisionByZero | Error::DegenerateTensor
        )
    }

    /// Errors caused by invalid arguments or configuration rather than data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::UnknownMethod(_)
                | Error::OptionsTypeMismatch { .. }
                | Error::BudgetOutOfRange { .. }
                | Error::DensityUnachievable
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
