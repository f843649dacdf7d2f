//! Regularised B-spline projected Gaussian process priors for 2-D surfaces,
//! censored Negative-Binomial count models and the mortality model built on them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod kernels;
pub mod likelihood;
pub mod linalg;
pub mod meta;
pub mod mortality;
pub mod priors;
pub mod regression;
pub mod simulation;
pub mod splines;
pub mod synthetic;

pub use error::{Error, Result};
