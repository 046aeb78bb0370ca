use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("unknown {kind} `{token}`")]
    Vocabulary { kind: &'static str, token: String },

    #[error("out-of-vocabulary word `{0}`")]
    OutOfVocabulary(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("duration error: {0}")]
    Duration(String),

    #[error("sequence of length {len} exceeds the maximum of {max}")]
    Length { len: usize, max: usize },

    #[error("degenerate contour: {0}")]
    DegenerateContour(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("translation backend error: {0}")]
    Backend(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Checkpoint(_) => 2,
            Error::Shape(_)
            | Error::Vocabulary { .. }
            | Error::OutOfVocabulary(_)
            | Error::Alignment(_)
            | Error::Duration(_)
            | Error::Length { .. }
            | Error::Contract(_)
            | Error::Validation(_)
            | Error::Input(_) => 3,
            Error::Numeric(_) | Error::Divergence { .. } | Error::DegenerateContour(_) => 4,
            _ => 1,
        }
    }
}
