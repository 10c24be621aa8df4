use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent with another.
    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A function argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("rate {0} bits/packet is not in the admissible rate set")]
    InvalidRate(f64),

    /// Numeric quadrature lost too much mass to be trusted.
    #[error("integration resolution too coarse: row {row} sums to {sum}")]
    Integration { row: usize, sum: f64 },

    #[error("Lloyd-Max iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    NonConvergence {
        iterations: usize,
        last_step: f64,
        representatives: Vec<f64>,
    },

    /// A Bayes update whose normalizer underflowed; the caller resets to the prior.
    #[error("observation has negligible likelihood under the current belief")]
    DegenerateUpdate,

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
