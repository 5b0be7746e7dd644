use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Hyperparameters or graph weights that the solver refuses to run with.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed or degenerate input data.
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// The iterate left the finite range or exceeded the divergence bound.
    #[error("divergence at iteration {iteration}: {quantity} = {value:e}")]
    Divergence {
        iteration: usize,
        quantity: &'static str,
        value: f64,
    },
}
