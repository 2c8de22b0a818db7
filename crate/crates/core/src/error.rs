use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("series failed to converge after {terms} terms")]
    Convergence { terms: usize },
    #[error("quadrature tolerance not met (estimate {estimate:e}, error {error:e})")]
    Accuracy { estimate: f64, error: f64 },
    #[error("out of range: {0}")]
    Range(String),
    #[error("hermite series diverges for beta >= alpha (alpha = {alpha}, beta = {beta})")]
    Divergence { alpha: f64, beta: f64 },
    #[error("channel gains must be sorted ascending")]
    Ordering,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate iteration: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
