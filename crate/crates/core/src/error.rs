use thiserror::Error;

use crate::term_structure::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cumulant argument {u} outside the closed domain |u + beta| <= {alpha}")]
    CumulantDomain { u: f64, alpha: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid market data: {0}")]
    MarketData(String),

    #[error("setup failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("quadrature did not converge: estimate {value:e}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("implied volatility: {0}")]
    ImpliedVol(String),

    #[error("rate index {index} out of range 1..={n}")]
    RateIndex { index: usize, n: usize },

    #[error("setup file: {0}")]
    SetupFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
