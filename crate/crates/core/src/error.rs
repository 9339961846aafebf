use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter fell outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid frame layout: {0}")]
    Layout(String),

    #[error("shape mismatch: expected {expected_frames}x{expected_bins}, got {frames}x{bins}")]
    Shape {
        expected_frames: usize,
        expected_bins: usize,
        frames: usize,
        bins: usize,
    },

    #[error("empty signal")]
    EmptySignal,

    #[error("invalid signal: {0}")]
    Signal(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Wav { path: PathBuf, msg: String },

    #[error("non-finite gradient at iteration {iteration}, frame {frame}")]
    NonFiniteGradient { iteration: usize, frame: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
