//! Digital-twin toolkit for a spatially extended SEIRS epidemic model.
//!
//! The crate bundles three layers:
//!
//! * a finite-volume solver for the two-group (Home/Mobile) SEIRS
//!   reaction-diffusion system, in transient and R0-eigenvalue modes
//!   ([`seirs`]),
//! * a PCA reduced-order model mapping the 800-variable state to a handful
//!   of principal components ([`rom`]),
//! * surrogate forecasters operating in the latent space — a bidirectional
//!   LSTM with BLUE data correction ([`lstm`], [`blue`]), a predictive GAN
//!   ([`gan`]) and a feed-forward baseline ([`nn::ffn`]) — plus the
//!   evaluation metrics ([`metrics`]) and the file/CLI plumbing ([`io`],
//!   [`pipeline`]) used to drive experiments.

pub mod blue;
pub mod gan;
pub mod grid;
pub mod io;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rom;
pub mod seirs;
pub mod state;
