//! Nest-relative triangular factorization of positive operators.
//!
//! The crate computes operator diagonals `∫ dP_s W dX_s` by partition sums,
//! builds the canonical triangular factor `V = D_{√C}ᵀ √C`, and provides the
//! experiments that probe its stability under `C^α → C`: regular convergence
//! on a nest, proof-term bounds, the positive-definite projection formula,
//! channel decompositions, and a counterexample for image projections.

pub mod amplitude;
pub mod cli;
pub mod config;
pub mod error;
pub mod factor;
pub mod nest;
pub mod opcore;
pub mod probes;
pub mod report;
pub mod stability;

pub use error::{Error, Result};
pub use opcore::{Operator, Projection};
