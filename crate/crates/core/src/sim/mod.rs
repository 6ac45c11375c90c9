//! Desk-scale teacher/student simulator.
//!
//! A Gaussian-cluster task ([`task`]) trains a dense tanh teacher
//! ([`net`], [`train`]). Students are pruned by global magnitude
//! ([`prune`]) and distilled against softened teacher outputs. The
//! harnesses measure staged-pruning deviations ([`pipeline`], [`probe`]),
//! the bias-variance split over student seeds ([`biasvar`]) and the
//! residual-versus-stages trend ([`sweep`]). [`experiment`] wires them to a
//! JSON config ([`config`]) and evaluates the experiment-level assertions.

use thiserror::Error;

use crate::softening::SoftenError;

pub mod biasvar;
pub mod config;
pub mod experiment;
pub mod net;
pub mod pipeline;
pub mod probe;
pub mod prune;
pub mod sweep;
pub mod task;
pub mod train;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("sparsity {0} is outside [current sparsity, 1)")]
    BadRho(f64),
    #[error("network shapes do not match")]
    ShapeMismatch,
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Soften(#[from] SoftenError),
}
