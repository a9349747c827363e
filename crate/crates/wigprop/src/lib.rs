//! Propagators of the Wigner function for one-dimensional systems with
//! polynomial potentials: trajectory pairs, the cubic-phase uniform
//! approximation, and an exact spectral reference.

extern crate blas_src;

pub mod classical;
pub mod error;
pub mod exact;
pub mod field;
pub mod harness;
pub mod linalg;
pub mod mat2;
pub mod model;
pub mod pathint;
pub mod propagate;
pub mod vanvleck;

pub use error::{Error, Result};
pub use model::{Model, PhasePoint, PolynomialPotential};
