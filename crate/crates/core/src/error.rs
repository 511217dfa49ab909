use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle guard: {0}")]
    OracleGuard(String),

    #[error("scheduler stalled: {0}")]
    Stalled(String),

    #[error("tasks left behind after termination: {0}")]
    Leftover(String),

    #[error("{bench} result differs from oracle (threads={threads}, seed={seed})")]
    OracleMismatch {
        bench: &'static str,
        threads: usize,
        seed: u64,
    },

    #[error("{bench} output differs between {left} and {right} (threads={threads}, seed={seed})")]
    DifferentialMismatch {
        bench: &'static str,
        left: String,
        right: String,
        threads: usize,
        seed: u64,
    },

    #[error("stress audit failed: {0}")]
    Audit(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
