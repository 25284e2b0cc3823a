use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("degenerate collapse: conditional wave function vanishes at the detected position")]
    DegenerateCollapse,

    #[error("state already collapsed")]
    AlreadyCollapsed,

    #[error("singular tridiagonal system at row {row} (pivot {pivot:e})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("no kept events: {0}")]
    NoEvents(String),

    #[error("visibility undefined: {found} extrema in window, need at least 3")]
    UndefinedVisibility { found: usize },

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("runtime error: {0}")]
    Runtime(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors that should map to the CLI's config-error exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Parse(_) | Error::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
