use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("postselected outcome has probability {probability:e}, below the 1e-12 threshold")]
    ZeroProbabilityOutcome { probability: f64 },
    #[error("{qubits} qubits exceeds the dense cap of {cap}")]
    DimensionTooLarge { qubits: usize, cap: usize },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("{key_bits}-bit key space is too large to enumerate (limit {limit})")]
    TooManyKeys { key_bits: usize, limit: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
