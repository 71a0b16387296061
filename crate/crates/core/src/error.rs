use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hurwitz: no positive definite Lyapunov solution exists")]
    NotHurwitz,

    #[error("input gain matrix numerically singular (condition estimate {cond:.3e})")]
    SingularGain { cond: f64 },

    #[error("state blow-up at t = {t:.6}: magnitude {value:.3e} exceeds bound {bound:.3e}")]
    BlowUp { t: f64, value: f64, bound: f64 },

    #[error("cost must be finite and non-negative, got {0}")]
    InvalidCost(f64),

    #[error("posterior variance {0:.3e} below tolerance: kernel matrix not positive semidefinite")]
    NegativeVariance(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code convention used by the CLI: config errors 2, numerical failures 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) => 2,
            _ => 3,
        }
    }
}
