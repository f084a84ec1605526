use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is rank deficient (smallest/largest singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("matrix is not Hermitian positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("matrix columns are not orthonormal (deviation {deviation:.3e})")]
    NotSemiUnitary { deviation: f64 },

    #[error("Gram-Schmidt completion found only {found} of {needed} basis vectors")]
    CompletionFailed { found: usize, needed: usize },

    #[error("codebook with {requested} entries exceeds the cap of {cap}")]
    CodebookTooLarge { requested: u128, cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("grid point {index} (value {value}): {source}")]
    GridPoint {
        index: usize,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
