use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("elliptic parameter m = {0} is outside the admissible domain")]
    Domain(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} at position {index} is outside [1, {classes}]")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        classes: usize,
    },

    #[error("kernel matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("positive-definite solve failed: {0}")]
    SolveFailed(String),

    #[error("IDX parse error in {path} at byte offset {offset}: {message}")]
    Idx {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("memory budget exceeded: operation needs {required} bytes but the budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("feature file {path}: {message}")]
    FeatureFile { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error on {path}: {message}")]
    Serialize { path: PathBuf, message: String },

    #[error("cancelled")]
    Cancelled,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
