use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The manifest text did not parse; `line`/`column` point at the offending token.
    #[error("format error in {path} at line {line}, column {column}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing ground-truth labels for movie {0}")]
    MissingLabels(String),

    #[error("non-finite loss in movie {movie} window starting at boundary {window_start}")]
    NonFiniteLoss { movie: String, window_start: usize },

    #[error("non-finite refinement gradient for super shot {0}")]
    NonFiniteGradient(usize),

    #[error("too few super shots: {count} <= minimum scene count {j_min}")]
    TooFewSuperShots { count: usize, j_min: usize },

    #[error("brute-force oracle supports at most {max} super shots, got {count}")]
    OracleTooLarge { count: usize, max: usize },

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("missing movie {0}")]
    MissingMovie(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
