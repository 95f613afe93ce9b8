use thiserror::Error;

/// Errors surfaced by the simulation core.
#[derive(Debug, Error)]
pub enum PolyError {
    /// Invalid parameters or incompatible inputs.
    #[error("configuration error: {0}")]
    Config(String),
    /// Non-finite values or numerical breakdown during evaluation.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A grid does not satisfy the preconditions of the operation.
    #[error("grid error: {0}")]
    Grid(String),
}

impl PolyError {
    pub fn config(msg: impl Into<String>) -> Self {
        PolyError::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        PolyError::Numeric(msg.into())
    }

    pub fn grid(msg: impl Into<String>) -> Self {
        PolyError::Grid(msg.into())
    }
}
