use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown option `{option}` in group `{group}`")]
    UnknownOption { group: String, option: String },

    #[error("exclusive group `{group}` has more than one option set{}", row_suffix(*.row))]
    ExclusivityViolation { group: String, row: Option<usize> },

    #[error("bit vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("parse error{}: {message}", row_suffix(*.row))]
    Parse { row: Option<usize>, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("index format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("unknown anchor {0}")]
    UnknownAnchor(usize),

    #[error("degenerate support: lower bound {a} exceeds upper bound {b}")]
    DegenerateSupport { a: i64, b: i64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no sampleable candidates: the dataset needs at least two distinct manifestations")]
    ExhaustedCandidates,

    #[error("batch size {size} exceeds dataset size {n}")]
    SizeExceedsDataset { size: usize, n: usize },

    #[error("vector {0} has zero norm")]
    ZeroNorm(usize),

    #[error("instance {0} is not paired across the required modalities")]
    UnpairedInstance(u64),

    #[error("batch has no rows of modality {0}")]
    MissingModality(&'static str),

    #[error("loss diverged (non-finite) at step {0}")]
    DivergedLoss(usize),

    #[error("both classes must be present in the {0} split")]
    SingleClassSplit(&'static str),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn row_suffix(row: Option<usize>) -> String {
    match row {
        Some(r) => format!(" (row {r})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
