use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid quantization spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("corrupt payload at byte {position}: {reason}")]
    CorruptPayload { position: usize, reason: String },

    /// A vector reserved for local evaluation leaked into a model that left
    /// the agent.
    #[error("data hygiene violation: {0}")]
    Hygiene(String),

    #[error("episode with seed {seed:#018x} failed: {source}")]
    Episode {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn corrupt(position: usize, reason: impl Into<String>) -> Self {
        Error::CorruptPayload {
            position,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
