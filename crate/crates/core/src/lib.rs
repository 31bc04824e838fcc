//! Stochastic neural fields on `[0, 2π]^d`: spectral Galerkin truncation of the
//! Amari equation driven by trace-class noise, and the finite-dimensional
//! Freidlin–Wentzell machinery (rate functions, minimum-action paths,
//! quasipotentials, exit times) built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: Neumann cosine basis, noise spectra, quadrature, projection.
//! * [`model`]: gain functions, kernels, Galerkin drift, stationary states, energy.
//! * [`noise`]: counter-based Q-Wiener increments and Ornstein–Uhlenbeck sampling.
//! * [`sim`]: Euler–Maruyama integration, Galerkin convergence, first-exit times.
//! * [`ldp`]: discrete action functional, minimisation, quasipotentials, Kramers.
//! * [`cli`]: config parsing and reproducible run directories for the `nfldp` binary.

// `!(x > 0.0)` also rejects NaN, which is the point of writing it that way.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod ldp;
pub mod model;
pub mod noise;
pub mod quad;
pub mod sim;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

/// Galerkin coefficient vector, ordered like [`spectral::SpectralBasis::indices`].
pub type CoefficientVector = nalgebra::DVector<f64>;
