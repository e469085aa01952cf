use std::path::PathBuf;

use crate::config::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error in section `{section}`, key `{key}`: {message}")]
    Config {
        section: String,
        key: String,
        message: String,
    },

    #[error("invalid configuration:\n{0}")]
    InvalidConfig(ValidationReport),

    #[error("dataset layout error: {0}")]
    Layout(String),

    #[error("class mismatch between `{left}` and `{right}`: {difference:?}")]
    ClassMismatch {
        left: String,
        right: String,
        difference: Vec<String>,
    },

    #[error("task error: {0}")]
    Task(String),

    #[error("cannot decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("augmentation error: {0}")]
    Augmentation(String),

    #[error("unknown backbone `{name}`; registered: {registered:?}")]
    UnknownBackbone {
        name: String,
        registered: Vec<String>,
    },

    #[error("weight source `{source_name}` is not available for `{backbone}`: {message}")]
    WeightsUnavailable {
        backbone: String,
        source_name: String,
        message: String,
    },

    #[error("unknown block `{name}`; valid blocks: {valid:?}")]
    UnknownBlock { name: String, valid: Vec<String> },

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("model assembly error: {0}")]
    Assembly(String),

    #[error("unknown optimizer `{name}`; registered: {registered:?}")]
    UnknownOptimizer {
        name: String,
        registered: Vec<String>,
    },

    #[error("optimizer `{optimizer}` does not support parameter `{param}`")]
    UnsupportedOptimizerParam { optimizer: String, param: String },

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("prediction error: {0}")]
    Prediction(String),

    #[error("export error: {0}")]
    Export(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
