use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("jump sizes must be strictly positive: {0}")]
    NonPositiveJumpSize(String),

    #[error("third moment of the jump measure is infinite: {0}")]
    InfiniteThirdMoment(String),

    #[error("jump rate must be finite and positive, got {0}")]
    NonPositiveRate(f64),

    #[error("atom weights must be finite and positive: {0}")]
    InvalidAtomWeight(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("horizon must be finite and positive, got {0}")]
    InvalidHorizon(f64),

    #[error("quadrature step must be positive, got {0}")]
    QuadStepNonPositive(f64),

    #[error("stopping time was computed on a different path")]
    StopFromForeignPath,

    #[error("argument must be nonnegative, got {0}")]
    NegativeArgument(f64),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("test function '{0}' is not bounded on the sampled support")]
    UnboundedTestFunction(String),

    #[error("operation requires a constant control, got {0}")]
    NonConstantControl(String),

    #[error("operation requires a Benes square-root control, got {0}")]
    NonBenesControl(String),

    #[error("operation requires a stop level")]
    MissingStopLevel,

    #[error("operation requires a {expected} driver")]
    WrongDriver { expected: &'static str },

    #[error("invalid control parameter: {0}")]
    InvalidControl(String),

    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },

    #[error("unknown control family '{family}' at {path}")]
    UnknownControlFamily { path: String, family: String },

    #[error("negative parameter at {path}")]
    NegativeParameter { path: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
