use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} is outside dims {dims:?}")]
    IndexOutOfRange { index: Vec<usize>, dims: Vec<usize> },

    #[error("duplicate index {0:?}")]
    DuplicateIndex(Vec<usize>),

    #[error("ragged channels: expected {expected} values, found {found} at entry {entry}")]
    RaggedChannels {
        expected: usize,
        found: usize,
        entry: usize,
    },

    #[error("no entries supplied")]
    Empty,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid permutation: {0}")]
    Permutation(String),

    #[error("dense size {cells} exceeds the cap of {cap} cells")]
    DenseCap { cells: usize, cap: usize },

    #[error("node {node}: {reason}")]
    Graph { node: usize, reason: String },

    #[error("empty pooling group {0}")]
    EmptyGroup(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cold {axis} {index}: no observed entries")]
    Cold { axis: &'static str, index: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("rating {rating} is not valid on scale {scale}")]
    OffScale { rating: f64, scale: String },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
