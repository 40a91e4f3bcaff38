use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MealyError {
    #[error("unknown input symbol `{0}`")]
    UnknownInput(String),
    #[error("transition for state {state} on `{input}` is undefined")]
    PartialTransition { state: usize, input: String },
    #[error("state {0} is unreachable from the initial state")]
    Unreachable(usize),
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("input alphabets differ")]
    AlphabetMismatch,
    #[error("input alphabet is empty")]
    EmptyAlphabet,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct DotError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Reasons a learning run or a single query can abort.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LearnError {
    #[error("reset failed {attempts} consecutive times")]
    ResetFailure { attempts: u32 },
    #[error("non-deterministic outputs persisted for query `{query}`")]
    NonDeterminismExceeded { query: String },
    #[error("reported counterexample `{0}` does not separate hypothesis and system")]
    InvalidCounterexample(String),
    #[error("learning did not converge within {0} rounds")]
    RoundLimit(usize),
    #[error("hypothesis exceeded {0} states")]
    StateLimit(usize),
    #[error(transparent)]
    Model(#[from] MealyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("unknown procedure `{0}`")]
    UnknownProcedure(String),
    #[error("{soc} does not support the {procedure} procedure")]
    Uncatalogued { soc: String, procedure: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapperError {
    #[error("symbol `{0}` is not in the active alphabet")]
    UnknownSymbol(String),
}
