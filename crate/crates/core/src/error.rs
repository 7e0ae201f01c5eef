use thiserror::Error;

/// Errors produced by the simulation and design routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("history lookup at t = {query:e} s is older than the buffer window starting at {oldest:e} s")]
    OutOfWindow { query: f64, oldest: f64 },

    #[error("state diverged at t = {time:e} s: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("loop design error: {0}")]
    Design(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
