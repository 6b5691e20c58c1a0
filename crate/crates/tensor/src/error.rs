use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("filter of width {filter} does not fit padded input of width {padded_input}")]
    FilterLargerThanInput { filter: usize, padded_input: usize },
    #[error("stride must be at least 1")]
    InvalidStride,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss is not connected to any tracked parameter")]
    DetachedGraph,
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("empty sequence")]
    EmptySequence,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
