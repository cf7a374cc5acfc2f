use thiserror::Error;

/// Errors produced by the detection library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of a kernel.
    #[error("domain error in {what}: {detail}")]
    Domain {
        what: &'static str,
        detail: String,
    },

    /// A vector had the wrong length for the consumer.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operation required at least one element of `what`.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Samples were routed to a buffer for a different task.
    #[error("task-id mismatch: expected task {expected}, sample carries {got}")]
    TaskMismatch { expected: usize, got: usize },

    /// No model head or buffer exists for the requested task.
    #[error("unknown task {0}")]
    UnknownTask(usize),

    /// The replay buffer for a task holds no samples.
    #[error("memory buffer for task {0} is empty")]
    EmptyBuffer(usize),

    /// A baseline threshold table lacks an entry for a learned task.
    #[error("missing threshold for task {0}")]
    MissingThreshold(usize),

    /// F1 is undefined because no positives exist at all (TP+FP+FN = 0).
    #[error("F1 undefined: no positive samples or predictions")]
    UndefinedF1,

    /// The accuracy matrix's final row does not cover all tasks.
    #[error("incomplete accuracy matrix: final row covers {got} of {expected} tasks")]
    IncompleteMatrix { expected: usize, got: usize },

    /// A configuration value violated an invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A config document could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// A persisted artifact (checkpoint, CSV) was malformed.
    #[error("malformed data: {0}")]
    MalformedData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
