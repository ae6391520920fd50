use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch, out-of-range index, bad parameter and similar caller
    /// errors.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (residual {0:.3e})")]
    NotUnitary(f64),

    #[error("density matrix has eigenvalue {0:.3e} below zero")]
    NegativeEigenvalue(f64),

    /// The underlying dense decomposition did not converge.
    #[error("decomposition failed: {0}")]
    Decomposition(String),

    /// A request exceeds a configured resource cap (e.g. state-vector size).
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("optimizer aborted: {0}")]
    Diverged(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
