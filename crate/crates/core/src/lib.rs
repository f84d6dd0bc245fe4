//! Numerics for Riesz means and bilinear Riesz means on Métivier groups.
//!
//! The crate covers step-two group arithmetic, the symplectic factorization of the
//! structure forms, Hermite and Laguerre special functions, grid functions with the
//! partial Fourier transform in the centre variable, twisted convolution and
//! spectral projections, linear and bilinear spectral multipliers with their
//! kernels, and an empirical operator-norm laboratory.

pub mod bilinear;
pub mod error;
pub mod fields;
pub mod group;
pub mod norms;
pub mod quad;
pub mod specfun;
pub mod spectral;
pub mod symplectic;
pub mod twisted;

pub use error::{Error, Result};
