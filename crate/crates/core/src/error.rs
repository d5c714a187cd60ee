//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or fixture data (bad file contents, empty line
    /// lists, non-increasing grids, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or iterative solve failed to reach the requested
    /// tolerance. Carries the best estimate and its error bound so callers
    /// can decide whether the partial result is still usable.
    #[error("{context}: did not converge (estimate {estimate:.6e}, error bound {error_bound:.3e})")]
    Convergence {
        context: String,
        estimate: f64,
        error_bound: f64,
    },

    /// Degenerate input data (e.g. constant counts passed to a normalizer).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Failed to parse a data or config file.
    #[error("parse error in {path}{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        path: String,
        line: Option<usize>,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
