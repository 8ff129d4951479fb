use thiserror::Error;

/// Failure taxonomy shared by every module in the crate.
#[derive(Debug, Clone, Error)]
pub enum LfsmError {
    /// A parameter is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// The requested quantity does not exist for these parameters
    /// (e.g. a moment of order p >= alpha).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Input data degenerate for the requested operation
    /// (e.g. an increment of exactly zero under a negative power).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Array shapes or lengths are inconsistent with the request.
    #[error("shape error: {0}")]
    Shape(String),

    /// The operation would exceed a configured resource cap.
    #[error("resource cap exceeded: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, LfsmError>;
