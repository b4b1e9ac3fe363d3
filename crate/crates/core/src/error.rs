use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("state ({s}, {i}, {r}) is absorbed; no jump is possible")]
    Absorbed { s: u64, i: u64, r: u64 },

    #[error("no competition to resolve: s = {s}, r = {r}")]
    NoCompetition { s: u64, r: u64 },

    #[error("n = {n} exceeds the exact-law cap of {cap}")]
    CapExceeded { n: u64, cap: u64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("undefined asymptote: {0}")]
    UndefinedRegime(String),

    #[error("quadrature did not converge: estimate {estimate}, error bound {error}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("distribution not normalized: total mass {0}")]
    NotNormalized(f64),

    #[error("no cells left after pooling")]
    EmptyCells,

    #[error("clock paths do not match n = {0}")]
    PathMismatch(u64),
}
