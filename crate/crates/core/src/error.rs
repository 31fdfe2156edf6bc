use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate at particle {particle}, dimension {dim}")]
    NonFiniteCoordinate { particle: usize, dim: usize },

    #[error("dimension mismatch: expected {expected} values per particle, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("error bound must be positive and finite, got {0}")]
    NonPositiveErrorBound(f64),

    #[error("quantization range overflow: {0}")]
    QuantRangeOverflow(String),

    #[error("empty input")]
    EmptyInput,

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("count mismatch: expected {expected} symbols, decoded {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("particle count mismatch: frame has {current}, reference has {reference}")]
    ParticleCountMismatch { current: usize, reference: usize },

    #[error("frame {0} not found")]
    FrameNotFound(u64),

    #[error("bad magic, not an lcp archive")]
    BadMagic,

    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u16),

    #[error("checksum mismatch in {0}")]
    ChecksumMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("value range of the original data is zero")]
    ZeroRange,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("failed to write archive")]
    SinkFailure(#[source] io::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("frame {index}: {source}")]
    Frame {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptStream(msg.into())
    }

    pub(crate) fn in_frame(self, index: u64) -> Self {
        match self {
            e @ Error::Frame { .. } => e,
            e => Error::Frame {
                index,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, looking through [`Error::Frame`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. } => source.root(),
            e => e,
        }
    }
}
