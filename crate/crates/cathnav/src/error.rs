use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("simulation failure: {0}")]
    Simulation(String),

    #[error("expert failed to reach target {target_id} within {steps} steps (scenario seed {seed})")]
    ExpertFailure {
        target_id: usize,
        steps: usize,
        seed: u64,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("encoder error: {0}")]
    Encoder(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("stats fingerprint mismatch: checkpoint expects {expected}, got {actual}")]
    FingerprintMismatch { expected: String, actual: String },

    #[error("checkpoint container error: {0}")]
    Container(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
