//! Gradient-based MCMC for differentiable log densities.
//!
//! The sampler is plain Hamiltonian Monte Carlo with a jittered path length.
//! Warmup tunes the step size by dual averaging and estimates a diagonal
//! mass matrix. Chains run in parallel, each on its own counter-based RNG
//! stream derived from `(seed, chain)`, so results are reproducible
//! regardless of thread scheduling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod diagnostics;
mod draws;
mod error;
pub mod integrator;
mod sampler;
mod target;

pub use draws::{ParameterSummary, PosteriorDraws};
pub use error::{DensityError, SampleError};
pub use sampler::{sample, SamplerConfig};
pub use target::LogDensity;
