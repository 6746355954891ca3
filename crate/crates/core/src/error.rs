use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range [{first}, {last}]")]
    Range { index: i64, first: i64, last: i64 },
    #[error("size error: {0}")]
    Size(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("gain synthesis failed: {0}")]
    Synthesis(String),
    #[error("iteration did not converge: {0}")]
    Convergence(String),
    #[error("basis is not orthonormal: {0}")]
    Basis(String),
    #[error("ill-conditioned problem: {0}")]
    Conditioning(String),
    #[error("degenerate excitation: {0}")]
    Degenerate(String),
    #[error("detector mode mismatch: {0}")]
    Mode(String),
    #[error("residual subspace is empty: {0}")]
    EmptyKernel(String),
    #[error("rank certificate failed: {0}")]
    Construction(String),
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    /// True for errors caused by numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Synthesis(_)
                | Error::Convergence(_)
                | Error::Conditioning(_)
                | Error::Degenerate(_)
                | Error::Construction(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
