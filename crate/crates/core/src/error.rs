use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A reflection coefficient reached the unit circle, so the
    /// autocorrelation sequence is not positive definite.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("singular innovation variance {variance:e} at sample {sample}")]
    SingularInnovation { sample: usize, variance: f64 },

    #[error("codebook format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad input rather than numeric failure.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::Format { .. }
            | Error::Wav { .. }
            | Error::Io(_) => true,
            Error::AtFrame { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
