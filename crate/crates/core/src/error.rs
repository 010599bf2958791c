use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("imputation error: {0}")]
    Imputation(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("embedding error: {0}")]
    Embedding(String),
    #[error("capacity error: {len} features do not fit into {n_qubits} qubits")]
    Capacity { len: usize, n_qubits: usize },
    #[error("invalid wire: {0}")]
    Wire(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("backward called without a forward cache")]
    MissingCache,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid circuit spec: {0}")]
    Spec(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("fold {index} failed: {source}")]
    Fold {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
