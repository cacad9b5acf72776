use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv")]
    Csv(#[from] csv::Error),
    #[error("malformed json")]
    Json(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("cannot parse value at row {row}, column {col}: `{value}`")]
    ParseError { row: usize, col: usize, value: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    InconsistentWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite or empty coordinates")]
    InvalidPoint,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("k = {k} exceeds the {available} eligible neighbors")]
    KTooLarge { k: usize, available: usize },
    #[error("k = {0} is too small, need k >= 2")]
    KTooSmall(usize),
    #[error("zero vector passed to the cosine kernel")]
    ZeroVector,
    #[error("gram matrix has a nonpositive diagonal entry at {0}")]
    NonpositiveDiagonal(usize),
    #[error("every edge vector is degenerate")]
    AllEdgesDegenerate,
    #[error("all scores are equal, no two-cluster split exists")]
    DegenerateScores,
    #[error("invalid kernel spec `{0}`")]
    BadKernelSpec(String),
    #[error("anomaly paths need the linear kernel, model uses `{0}`")]
    KernelNotLinear(String),
    #[error("landscapes are 2-D only, data has d = {0}")]
    UnsupportedDimension(usize),
    #[error("neighbor source has {available} points, k = {k}")]
    EmptyNeighborSource { k: usize, available: usize },
    #[error("fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("missing labels: {0}")]
    MissingLabels(&'static str),
    #[error("both anomaly and normal labels are required")]
    SingleClass,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from numerics (degenerate geometry, empty
    /// splits) rather than from malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::ZeroVector
                | Error::NonpositiveDiagonal(_)
                | Error::AllEdgesDegenerate
                | Error::DegenerateScores
                | Error::SingleClass
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
