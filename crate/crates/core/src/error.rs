use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("degenerate axis: {0}")]
    DegenerateAxis(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite gradient in parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("missing gradient for parameter {index}")]
    MissingGradient { index: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error("filter design: {0}")]
    Design(String),

    #[error("signal too short: {len} samples, need more than {min}")]
    TooShort { len: usize, min: usize },

    #[error("degenerate pulse: {0}")]
    DegeneratePulse(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("class error: {0}")]
    Class(String),

    #[error("checkpoint integrity: {0}")]
    Integrity(String),

    #[error("unsupported model '{name}' (supported: {supported})")]
    UnsupportedModel { name: String, supported: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedModel { .. } | Error::Design(_) => 2,
            Error::NonFiniteGradient { .. }
            | Error::NonFiniteLoss { .. }
            | Error::MissingGradient { .. } => 4,
            _ => 3,
        }
    }
}
