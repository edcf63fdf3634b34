use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid bank mask: {0}")]
    InvalidMask(String),

    /// The mask is structurally valid but not one the controller may latch
    /// (contiguous-from-zero, power-of-two bank count, power-of-two D').
    #[error("bank mask is not controller-legal: {0}")]
    IllegalMask(String),

    #[error("column {index} lies outside the enabled banks")]
    GatingViolation { index: usize },

    #[error("accumulators were built under a different bank mask; a full scan is required")]
    StaleAccumulators,

    #[error("delta set overflowed ({len} flips > capacity {capacity}); a full scan is required")]
    DeltaOverflow { len: usize, capacity: usize },

    #[error("k = {k} is out of range for {concepts} concepts")]
    InvalidK { k: usize, concepts: usize },

    #[error("score state and task weights carry different mask tags")]
    MaskTagMismatch,

    #[error("gate `{0}` is handled by the caller, not by the reasoner")]
    InvalidGate(&'static str),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration or input files,
    /// as opposed to failed checks.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Format(_)
                | Error::Validation(_)
                | Error::UnknownStrategy { .. }
                | Error::UnknownRelation(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
