use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model definition error: {0}")]
    ModelDefinition(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("fixed-point iteration diverged after {iterations} iterations (residual {residual:.3e}); try a smaller damping factor")]
    Divergence { iterations: usize, residual: f64 },

    #[error("no steady state of mass {mass} within the E0 bracket [{lo}, {hi}]")]
    BracketExhausted { mass: f64, lo: f64, hi: f64 },

    #[error("support reaches the end of the grid at r = {r_max}; increase r_max")]
    GridTooSmall { r_max: f64 },

    #[error("non-finite coordinate for particle {index} after step")]
    NonFinite { index: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} must be finite, got {x}")))
    }
}
