//! Numerical core for studying post-memorization ("grokking") dynamics of
//! small networks trained on modular addition.
//!
//! The crate is `no_std` + `alloc`. The default `std` feature only switches
//! the dense kernels of `nalgebra` to their threaded/vectorized backends and
//! enables `std::error::Error` impls; results do not depend on it.
//!
//! Module map:
//! - [`data`]: modular-addition dataset and seeded train/test split.
//! - [`net`]: two-layer network, loss, backprop gradient, output Jacobian.
//! - [`train`]: full-batch gradient descent with optional momentum.
//! - [`probe`]: zero-loss projection estimate, norm-minimizing tangent
//!   direction, cosine diagnostics, gradient-orthogonality probe.
//! - [`effective`]: ridge / pseudoinverse optimal readout, isolated cost of
//!   the first layer, its closed-form gradient and the simulation loop.
//! - [`fourier`]: DFT of the embedding matrix and circle diagnostics.
//! - [`toy`]: two- and three-parameter toy models.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod effective;
mod error;
pub mod fourier;
pub mod linalg;
mod math;
pub mod metrics;
pub mod net;
pub mod probe;
pub mod toy;
pub mod train;

pub use error::{Error, Result};

/// Dense, heap-allocated `f64` matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense, heap-allocated `f64` column vector.
pub type Vector = nalgebra::DVector<f64>;
