//! Randomized filtering (RF): a seeded sign flip, unitary FFT and random
//! frequency subsampling, `Φ = S·F·D`, applied column by column to streaming
//! data, plus the tooling used to evaluate it.
//!
//! - [`operator`] builds and applies Φ, with a dense oracle for testing.
//! - [`metrics`] measures isometry constants, inner-product deviation,
//!   Procrustes distance and detection scores.
//! - [`estimation`] runs trace estimation and template classification on
//!   compressed measurements.
//! - [`baselines`] holds the LPF, PCA and LLE comparison methods.
//! - [`generators`] synthesizes sine-manifold, calcium-imaging and vorticity
//!   datasets, and ingests external matrices.
//! - [`harness`] drives the experiment sweeps behind the `rfkit` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod estimation;
pub mod generators;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod operator;
pub mod rng;

pub use error::{Result, RfError};
pub use matrix::{Column, DataMatrix, Dtype};
pub use operator::RfOperator;
pub use rustfft::num_complex::Complex64;
