//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Result`]. Variants are
//! deliberately specific so callers (and tests) can distinguish a bad
//! configuration from malformed data or a numerical breakdown.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received an empty vector where data was required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Two quantities that must agree in size did not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A parameter was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A channel gain of exactly zero cannot be inverted; only possible when
    /// the scheduling threshold is zero.
    #[error("channel gain is zero and the scheduling threshold admits it; cannot invert")]
    ZeroChannelGain,

    /// Every device fell below the scheduling threshold, so the effective
    /// observation is undefined (its normalizer would be zero).
    #[error("scheduled device set is empty; effective observation undefined")]
    EmptyScheduledSet,

    /// Tasks carry different scheduled data-size totals; the shared scalar
    /// normalizer of the effective observation does not exist.
    #[error("per-task normalizers differ across tasks ({0:?}); a common scale factor is required")]
    UnequalNormalizers(Vec<f64>),

    /// An IDX file did not start with the expected magic number.
    #[error("bad IDX magic in {path}: expected {expected:#010x}, got {got:#010x}")]
    IdxBadMagic {
        path: String,
        expected: u32,
        got: u32,
    },

    /// An IDX file ended before the payload promised by its header.
    #[error("truncated IDX file {path}: expected {expected} bytes of payload, got {got}")]
    IdxTruncated {
        path: String,
        expected: usize,
        got: usize,
    },

    /// An image file and a label file disagree on the number of items.
    #[error("IDX image/label count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    /// Underlying I/O failure (file reads, directory creation).
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Helper for building [`Error::InvalidArgument`] from format args.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
