//! Mean-field interacting bosons in a weak harmonic trap.
//!
//! The crate covers the one-particle Gibbs semigroup of the trap, ideal-gas
//! densities, the mean-field self-consistency system, Fredholm-determinant
//! representations of the grand-canonical partition function and of the
//! generating functional of the boson point field, and a Metropolis-Hastings
//! sampler for the finite permanental point field.

pub mod error;
pub mod fredholm;
pub mod inequalities;
pub mod meanfield;
pub mod quadrature;
pub mod sampler;
pub mod special;
pub mod spectral;
pub mod thermo;

pub use error::{Error, Result};
