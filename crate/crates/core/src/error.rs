use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("{what}: expected {expected} rows, got {got}")]
    RowMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("resolution parameter must be positive, got {0}")]
    InvalidQ(f64),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension {
        context: &'static str,
        detail: String,
    },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("{0}")]
    TooLarge(String),
    #[error("invalid forest: {0}")]
    InvalidForest(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            context,
            detail: detail.into(),
        }
    }
}

/// Accepts any `q > 0` including `+inf`; rejects zero, negatives and NaN.
pub(crate) fn check_q(q: f64) -> Result<()> {
    if q > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidQ(q))
    }
}
