use thiserror::Error;

/// Errors raised while building or evaluating a game.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("value {value:#x} does not fit in {width} bits")]
    Domain { value: u64, width: u32 },
    #[error("overwrite of {written} bytes exceeds target of {target} bytes")]
    Overwrite { written: usize, target: usize },
    #[error("non-contiguous overflow: {0}")]
    Contiguity(&'static str),
    #[error("invalid program model: {0}")]
    Program(String),
    #[error("invalid countermeasure configuration: {0}")]
    Config(String),
    #[error("missing key material for `{0}`")]
    MissingKey(&'static str),
}

/// Failure modes of an oracle, in-process or remote.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("query budget exhausted")]
    BudgetExhausted,
    #[error("remote error `{reason}`: {detail}")]
    Remote { reason: String, detail: String },
    #[error("transport error: {0}")]
    Transport(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("enumeration space of {space} exceeds the limit of {limit}")]
    Infeasible { space: u128, limit: u128 },
    #[error("invalid experiment configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoundError {
    #[error("invalid bound parameters: {0}")]
    Params(String),
}
