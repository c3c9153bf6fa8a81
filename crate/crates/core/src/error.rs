use std::fmt;
use std::path::PathBuf;

/// Which half of the two-step pipeline a backend call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Coarse,
    Fine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Coarse => f.write_str("coarse"),
            Stage::Fine => f.write_str("fine"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("mask has no foreground pixels")]
    NoForeground,

    #[error("degenerate mask: {0}")]
    DegenerateMask(String),

    #[error("no mask stored for image `{id}` ({})", path.display())]
    MissingMask { id: String, path: PathBuf },

    #[error("no ground truth registered for image `{0}`")]
    MissingTruth(String),

    #[error("{stage} backend failed on `{id}`: {source}")]
    Backend {
        stage: Stage,
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported backend `{0}`")]
    UnsupportedBackend(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
