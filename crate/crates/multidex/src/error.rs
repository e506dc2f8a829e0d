use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset: {0}")]
    EmptyData(&'static str),

    #[error("kernel matrix not positive definite after jitter escalation up to {max_jitter}")]
    SingularKernel { max_jitter: f64 },

    #[error("model not fitted")]
    ModelNotFitted,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
