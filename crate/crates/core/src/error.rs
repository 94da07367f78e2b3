use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index ({row}, {col}) out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },

    #[error("span is not closed under the bracket: [{left}, {right}] has residual {residual:e}")]
    NotClosed {
        left: String,
        right: String,
        residual: f64,
    },

    #[error("basis is not linearly independent: rank {rank} < {expected}")]
    NotIndependent { rank: usize, expected: usize },

    #[error("ad-series did not converge within {terms} terms")]
    SeriesNotConverged { terms: usize },

    #[error("quadrature on [{a}, {b}] did not converge (error estimate {estimate:e})")]
    QuadratureNotConverged { a: f64, b: f64, estimate: f64 },

    #[error("Krylov exponential did not reach tolerance (t = {t_now} of {t_out}, {rejections} rejections)")]
    KrylovNotConverged {
        t_now: f64,
        t_out: f64,
        rejections: usize,
    },

    #[error("dense exponential requested for dimension {dim} above the cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("cannot parse rate function `{input}`: {reason}")]
    RateParse { input: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
