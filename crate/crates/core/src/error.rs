use thiserror::Error;

/// Errors shared across the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operation requires the canonical frame (u* = v* = e1)")]
    CanonicalFrameRequired,

    #[error("least-squares subproblem is ill-conditioned (condition estimate {cond:.3e})")]
    IllConditionedSubproblem { cond: f64 },

    #[error("iterate collapsed to zero norm ({norm:.3e}); trial failed")]
    DegenerateIterate { norm: f64 },

    #[error("observation vector carries no direction information (zero norm)")]
    DegenerateObservation,

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("entrywise diagnostics are not supported on streamed operators")]
    NotSupportedInStreamedMode,

    #[error("no data to plot")]
    NoData,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed operator dump: {0}")]
    MalformedDump(String),
}

pub type Result<T> = std::result::Result<T, Error>;
