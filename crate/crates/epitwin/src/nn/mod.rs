//! Minimal dense neural-network substrate: tensors, a reverse-mode tape,
//! Adam/Nadam optimizers, initialisation, a finite-difference gradient
//! checker, and the feed-forward baseline network.

pub mod ffn;
pub mod gradcheck;
pub mod optim;
pub mod scaling;
pub mod tape;
pub mod tensor;

pub use ffn::{ffn_predict, train_ffn, FfnHyper, FfnModel};
pub use gradcheck::grad_check;
pub use optim::{optimizer_step, seeded_rng, Algorithm, OptimConfig, WeightStore};
pub use scaling::AffineScaler;
pub use tape::{Grads, Graph, NodeId};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParameter(String),
    #[error("invalid optimizer config: {0}")]
    BadOptimConfig(String),
    #[error("model has not been trained")]
    Untrained,
    #[error("non-finite loss at step {step}: {loss}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("training series too short: {got} levels, need at least {need}")]
    SeriesTooShort { got: usize, need: usize },
}
