//! Truncated non-uniform gradient quantization (TNQ) with a small
//! distributed SGD simulator.
//!
//! - [`quantizer`]: truncation, stochastic rounding, grid construction and
//!   the TNQ1 wire format.
//! - [`laplace`]: Laplace gradient model and closed-form optimal parameters.
//! - [`analysis`]: error formulas and convergence bounds for the four schemes.
//! - [`plan`]: per-layer scheme selection (α and grid) for encoding.
//! - [`data`]: IDX loading, synthetic tasks and client partitioning.
//! - [`simtrain`]: models, clients, aggregation and the training loop.

pub mod analysis;
pub mod data;
pub mod error;
pub mod laplace;
pub mod pdf;
pub mod plan;
pub mod quad;
pub mod quantizer;
pub mod rng;
pub mod simtrain;

pub use error::{Error, Result};
