//! Diffusion models over latent edit directions.
//!
//! The pipeline: difference `(positive, negative)` latent pairs into edit
//! directions, center and unit-normalize them, train a time-conditioned MLP
//! DDPM on the result, draw new directions by ancestral sampling and apply
//! them with `w_e = w_s + γ d0 + λ m_a`. A synthetic latent world with known
//! attribute subspaces stands in for an encoder/generator stack and supplies
//! the ground truth the metrics are checked against.
//!
//! Start with the runnable programs under `examples/`, or the `diffedit`
//! binary for the file-based workflow.

pub mod cli;
pub mod diffusion;
pub mod directions;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod sampling;
pub mod synthworld;
pub mod training;

pub use error::{Error, Result};
