//! Finite-volume solver for the two-group spatial SEIRS system: classical
//! point equations, transient integration and the R0 eigenvalue mode.

pub mod classical;
pub mod diffusion;
pub mod eigen;
pub mod transient;

pub use classical::{classical_rhs, ClassicalParams};
pub use diffusion::apply_diffusion;
pub use eigen::{solve_eigen, EigenOptions, EigenResult};
pub use transient::{simulate, step_transient, SolverOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeirsError {
    #[error("non-finite value in state: {context}")]
    NonFinite { context: String },
    #[error("population must be positive (N = {n})")]
    EmptyPopulation { n: f64 },
    #[error(
        "{stage} failed to converge{}: {iters} iterations, last update {last_update:.3e} (tol {tol:.1e})",
        step.map(|s| format!(" at step {s}")).unwrap_or_default()
    )]
    Convergence { stage: &'static str, step: Option<usize>, iters: usize, last_update: f64, tol: f64 },
    #[error("eigen solve error: {0}")]
    Model(#[from] crate::model::ModelError),
}
