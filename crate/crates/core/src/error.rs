use thiserror::Error;

pub type Result<T> = std::result::Result<T, ScanError>;

/// Errors raised by the scan engine.
///
/// Input problems (`InvalidInput`, `Parse`, `Io`) are kept apart from
/// statistical degeneracies so callers can map them to different exit codes.
#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("region index {index} out of range for a map with {len} regions")]
    InvalidIndex { index: usize, len: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("method `{0}` requires structural-zero indicators in the case data")]
    MissingStructuralZeros(&'static str),

    #[error("replica {index} (seed {seed}) failed: {source}")]
    Replica {
        index: u64,
        seed: u64,
        #[source]
        source: Box<ScanError>,
    },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ScanError {
    /// True for failures caused by the input itself rather than by the statistics.
    pub fn is_input_error(&self) -> bool {
        match self {
            ScanError::InvalidInput(_)
            | ScanError::Parse { .. }
            | ScanError::InvalidIndex { .. }
            | ScanError::MissingStructuralZeros(_)
            | ScanError::UnknownScenario(_)
            | ScanError::Io(_)
            | ScanError::Json(_)
            | ScanError::Csv(_) => true,
            ScanError::Degenerate(_) => false,
            ScanError::Replica { source, .. } => source.is_input_error(),
        }
    }
}
