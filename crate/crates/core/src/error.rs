use thiserror::Error;

/// Errors produced by the frontalization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The head does not project into the camera image.
    #[error("no face in view")]
    NoFace,

    #[error("invalid reference surface: {0}")]
    InvalidSurface(String),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    /// Configuration problems, one diagnostic per offending field.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
