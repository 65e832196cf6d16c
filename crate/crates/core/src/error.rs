use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid state: rho = {rho:e}, p = {pressure:e}")]
    InvalidState { rho: f64, pressure: f64 },

    #[error("positivity violation in element {element} at t = {time:e}: state {state:?}")]
    Positivity {
        element: usize,
        time: f64,
        state: [f64; 4],
    },

    #[error("non-finite value detected in stage {stage} of step {step}")]
    NonFinite { step: usize, stage: usize },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("rank {rank} failed: {source}")]
    Rank {
        rank: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
