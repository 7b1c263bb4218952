use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid network state: {0}")]
    InvalidState(String),

    #[error("Cholesky factorization of a {size}x{size} Gram matrix failed even with jitter {jitter:e}")]
    Cholesky { size: usize, jitter: f64 },

    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("x values span a degenerate range (all equal to {0})")]
    DegenerateRange(f64),

    #[error("sampler aborted: {0}")]
    SamplerAbort(String),

    #[error("no bracketing interval found for `{name}` in [{lo}, {hi}]")]
    NoBracket { name: &'static str, lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and strictly positive, got {value}"),
        })
    }
}
