use thiserror::Error;

use crate::decomposition::Witness;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The lattice degree does not fit the physical dimension (`d >= 2^v`).
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("operator is not Hermitian (max deviation {deviation:e} exceeds {tolerance:e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("degenerate construction: {0}")]
    Degenerate(String),

    #[error("state is not strictly inside the dual (margin {margin:e})")]
    NotStrict { margin: f64 },

    #[error("site {site} is not trace-factorizable (relative residual {residual:e})")]
    NotFactorizable { site: usize, residual: f64 },

    #[error("positivity violation: {0}")]
    Positivity(Witness),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
