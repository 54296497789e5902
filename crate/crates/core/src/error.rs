use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("degenerate quote: {0}")]
    DegenerateQuote(String),

    #[error("no solution: target quote {target:e} outside attainable range [{lo:e}, {hi:e}]")]
    NoSolution { target: f64, lo: f64, hi: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("weight file error at layer {layer:?}: {msg}")]
    Weights { layer: Option<usize>, msg: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn weights(layer: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Weights {
            layer,
            msg: msg.into(),
        }
    }
}
