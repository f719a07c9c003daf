use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector shapes do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A domain invariant is violated; `invariant` names it.
    #[error("invariant `{invariant}` violated: {detail}")]
    Invariant {
        invariant: &'static str,
        detail: String,
    },

    #[error("(1-gamma)*rho(A)^(2n) >= 1 for gamma={gamma}, n={n}: mean covariance is unbounded")]
    Unstable { gamma: f64, n: usize },

    #[error("fixed-point iteration did not converge within {max_iter} iterations (last change {last_change:e})")]
    NoConvergence { max_iter: usize, last_change: f64 },

    #[error("derivative is singular at tau = 0")]
    SingularDerivative,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("query out of range: {0}")]
    Query(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            invariant,
            detail: detail.into(),
        }
    }
}
