//! Solver for noise-forced nonlocal evolution equations on graphons.
//!
//! The equation
//!
//! ```text
//! du = ( f(t, u) + ∫ K(x, y) S(u(x), u(y)) dy ) dt + dW(t, x),   x ∈ [0, 1]
//! ```
//!
//! is discretized by an `n`-cell Galerkin projection in space and
//! Euler-Maruyama in time. Noise paths are synthesized once at a fine
//! resolution and coarsened, so every discretization in a convergence study
//! is driven by the same Brownian sample.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kernels;
pub mod noise;
pub mod quadrature;

pub use error::{Error, Result};
