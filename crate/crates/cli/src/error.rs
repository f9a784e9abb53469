use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    BadHeader { path: String, expected: String, found: String },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: String, line: u64, reason: String },

    #[error("{path}:{line}: event at {event_time} precedes the opening of centre {centre_id} at {open_time}")]
    EventBeforeOpening { path: String, line: u64, centre_id: String, open_time: f64, event_time: f64 },

    #[error("{path}:{line}: event at {event_time} is after the census at {census}")]
    EventAfterCensus { path: String, line: u64, event_time: f64, census: f64 },

    #[error("{path}:{line}: centre {centre_id} opens at {open_time}, after the census at {census}")]
    OpeningAfterCensus { path: String, line: u64, centre_id: String, open_time: f64, census: f64 },

    #[error("too few centres: {found} open for at least the window {window}, need {needed}")]
    TooFewCentres { found: usize, needed: usize, window: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] recruit_core::Error),
}

impl CliError {
    /// 2 for data problems, 3 for a degenerate fit, 4 for configuration errors.
    pub fn exit_code(&self) -> i32 {
        use recruit_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Json(_) => 4,
            CliError::Core(E::DegenerateLikelihood { .. }) => 3,
            CliError::Core(E::Config(_) | E::Domain(_) | E::Unsupported(_)) => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
