//! Pseudospectral simulation and verification laboratory for a two-parameter
//! family of nonlinear dispersive equations of shallow-water type.
//!
//! The family is parameterised by a nonlinearity degree `k` and a stretching
//! parameter `b`; it contains the classical unidirectional integrable models
//! as special cases.  The crate builds multiscale initial data designed to
//! exhibit gradient growth at the critical Sobolev regularity, evolves the
//! equation with a de-aliased Fourier collocation method, follows flow
//! trajectories through the solution field, and cross-checks every identity
//! the construction relies on against independent discretisations.

pub mod analysis;
pub mod error;
pub mod evolve;
pub mod lagrange;
pub mod models;
pub mod spectral;

pub use error::{Error, Result};
