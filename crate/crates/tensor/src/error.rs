use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid parameter for {op}: {msg}")]
    Parameter { op: &'static str, msg: String },
    #[error("batchnorm in train mode needs at least 2 samples per statistic, got {0}")]
    DegenerateBatch(usize),
    #[error("contract violation: {0}")]
    Contract(String),
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        TensorError::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn param(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Parameter {
            op,
            msg: msg.into(),
        }
    }
}
