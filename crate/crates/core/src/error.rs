use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row_id}, column \"{column}\": {message}")]
    Row {
        row_id: u64,
        column: String,
        message: String,
    },

    #[error("row {row_id}: {column} = {value} outside observed range [{min}, {max}]")]
    Range {
        row_id: u64,
        column: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("column \"{0}\" has zero variance")]
    ZeroVariance(String),

    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown column \"{0}\"")]
    UnknownColumn(String),

    #[error("missing feature \"{0}\"")]
    MissingFeature(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("incompatible bundle format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("no entry for target \"{0}\"")]
    UnknownTarget(String),

    #[error("all {} search trials failed; first reason: {}", .0.len(), .0.first().and_then(|t| t.failure.as_deref()).unwrap_or("none"))]
    AllTrialsFailed(Vec<crate::tune::TrialResult>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("json error at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
