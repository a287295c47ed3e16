use thiserror::Error;

/// Errors produced by the simulation, estimation and prediction routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("channel order P = {order} must be smaller than the spreading gain N = {gain}")]
    ChannelTooLong { order: usize, gain: usize },

    #[error("empty symbol range")]
    EmptyRange,

    #[error("normal-equation matrix is singular (condition estimate {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("normal-equation matrix was not assembled; rebuild with the Gram matrix")]
    MissingGram,

    #[error("iterative solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("zero channel vector")]
    ZeroChannel,

    #[error("training fraction alpha = {0} must lie strictly between 0 and 1")]
    AlphaOutOfRange(f64),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("Hessian of the matching cost is singular (condition estimate {condition:.3e})")]
    SingularHessian { condition: f64 },

    #[error("moment covariance is singular")]
    SingularCovariance,

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("cell {cell}, trial {trial}: {source}")]
    Trial {
        cell: String,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
