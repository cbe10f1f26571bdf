use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown type `{0}`")]
    UnknownType(String),

    #[error("index {index} out of range for `{context}` (bound {bound})")]
    IndexOutOfRange {
        context: String,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duplicate edge ({src}, {dst}) in edge type `{edge_type}`")]
    DuplicateEdge { edge_type: String, src: usize, dst: usize },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid meta-path {path}: {reason}")]
    InvalidPath { path: String, reason: String },

    #[error("meta-path {0} ends at a type without features")]
    FeaturelessEndType(String),

    #[error("negative value {value} at ({row}, {col})")]
    NegativeValue { row: usize, col: usize, value: f64 },

    #[error("malformed sparse matrix: {0}")]
    MalformedMatrix(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("row {row} sums to {sum}, matrix is not row-stochastic")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("logits have no classes")]
    EmptyLogits,

    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotADistribution { row: usize, sum: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("no propagation meta-paths given")]
    EmptyPathSet,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("ranking metric needs at least one positive and one negative")]
    DegenerateLabels,

    #[error("empty input")]
    Empty,

    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("training or validation node {node} carries the OOD class {class}")]
    OodLabelInTrainSet { node: usize, class: usize },

    #[error("OOD class {0} does not occur in the labels")]
    OodClassMissing(usize),

    #[error("split fractions cannot be satisfied: {0}")]
    FractionOverflow(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {message}", file.display())]
    Validation { file: PathBuf, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
