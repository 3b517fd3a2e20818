use thiserror::Error;

use crate::leader::EquilibriumResult;
use crate::learner::PolicyParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// Invalid scenario, distribution or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    /// The pricing solver hit its iteration cap. The best iterate is kept.
    #[error(
        "solver did not converge: projected-gradient residual {:.3e} after {} iterations",
        .best.grad_residual,
        .best.iterations
    )]
    NotConverged { best: Box<EquilibriumResult> },

    /// A NaN or infinity appeared in the trainable parameters.
    #[error("numeric failure at episode {episode}: {message}")]
    Diverged {
        episode: usize,
        message: String,
        snapshot: Box<PolicyParams>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Shape { expected, got })
        }
    }
}
