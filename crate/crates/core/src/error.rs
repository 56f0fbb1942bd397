use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is singular (det = {det:e})")]
    Singular { det: f64 },

    /// The canonical reduction does not exist at this working point.
    #[error("degenerate transfer matrix: {0}")]
    Degenerate(String),

    /// A thickness perturbation produced a layer of nonpositive length.
    #[error("perturbed length of layer {layer} is nonpositive ({length:e})")]
    NonpositiveLength { layer: usize, length: f64 },

    /// A numerical procedure did not reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and > 0, got {value}")))
    }
}
