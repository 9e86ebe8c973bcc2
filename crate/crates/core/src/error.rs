use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A grid point that no camera sees; the coverage problem has no solution.
    #[error("coverage infeasible: grid point {point} is not visible in any camera")]
    Infeasible { point: usize },

    #[error("requested K = {k} is below the minimal coverage size K_min = {k_min}")]
    BelowMinimalCoverage { k: usize, k_min: usize },

    #[error("non-finite value while rendering ray {ray}: {what}")]
    NonFinite { ray: usize, what: String },

    #[error("rendering pixel ({u}, {v}) failed: {source}")]
    Pixel {
        u: usize,
        v: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite loss at iteration {iteration} (last finite loss {last_loss:?})")]
    Diverged { iteration: usize, last_loss: Option<f64> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed data: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::BelowMinimalCoverage { .. } => 2,
            Error::Infeasible { .. } => 3,
            Error::Io { .. } | Error::Format { .. } | Error::Json { .. } | Error::Image { .. } => 4,
            Error::Pixel { source, .. } => source.exit_code(),
            Error::NonFinite { .. } | Error::Diverged { .. } => 1,
        }
    }
}
