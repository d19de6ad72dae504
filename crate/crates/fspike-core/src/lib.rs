//! Fractional-order spiking neural networks with memory-aware adjoint
//! training.
//!
//! The crate is organised bottom-up:
//!
//! - [`fde`] — time grids, Gamma / Mittag-Leffler special functions, and
//!   explicit fractional Adams-Bashforth-Moulton integrators for left- and
//!   right-Caputo systems.
//! - [`surrogate`] — smooth spike-gradient surrogates used in place of the
//!   Heaviside derivative during training.
//! - [`neuron`] — fractional leaky-integrate-and-fire membrane dynamics.
//! - [`network`] — feedforward spiking layers coupled into one flat state
//!   vector integrated by the fractional solver.
//! - [`adjoint`] — memory-aware gradients through the unrolled solver.
//! - [`train`] — losses, optimisers, the training loop, and gradient checks.
//! - [`data`] — spike encodings, IDX/CSV dataset loading, corruptions,
//!   checkpoints, and a built-in synthetic digit set.
//! - [`energy`] — spike-rate-based energy estimates for network inference.
//! - [`config`] / [`cli`] — TOML experiment configuration and the `fspike`
//!   command-line front end.

pub mod adjoint;
pub mod cli;
pub mod data_io;
pub mod energy;
pub mod error;
pub mod fde;
pub mod network;
pub mod neuron;
pub mod surrogate;
pub mod train;

pub use error::{Error, Result};
