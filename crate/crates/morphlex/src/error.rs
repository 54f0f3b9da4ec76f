//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input line; `line` is 1-based.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("seed lexicon is empty")]
    EmptySeed,

    /// The induced dictionary became empty; under a morphological
    /// constraint the rejection count names how many source words the
    /// filter left without any admissible candidate.
    #[error("induced dictionary is empty ({constraint_rejections} source words rejected by the constraint)")]
    EmptyDictionary { constraint_rejections: usize },

    #[error("SVD did not converge within {max_iters} iterations")]
    SvdNonConvergence { max_iters: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for {context} of length {len}")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("tag {raw:?} is empty after normalization")]
    EmptyTag { raw: String },

    #[error("invalid normalization rules: {0}")]
    InvalidRules(String),

    #[error("need at least 3 distinct source lemmata to split, found {found}")]
    TooFewLemmata { found: usize },
}
