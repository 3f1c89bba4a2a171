use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty matrix ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },

    #[error("index ({u}, {v}) out of bounds for {rows}x{cols} spectrum")]
    IndexOutOfBounds {
        u: usize,
        v: usize,
        rows: usize,
        cols: usize,
    },

    #[error("duplicate spectral index ({u}, {v})")]
    DuplicateIndex { u: usize, v: usize },

    #[error("wrong spectral basis: expected {expected}, got {actual}")]
    WrongBasis {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("requested {requested} coefficients but only {available} are available")]
    BudgetTooLarge { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("non-finite activations in {stage}")]
    NonFiniteActivation { stage: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
