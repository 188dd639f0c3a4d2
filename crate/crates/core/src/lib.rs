//! Identification of nonlinear systems as generalized Persidskii models via
//! Koopman generators (EDMD), and constructive input-to-state stability
//! verification of the identified model through linear matrix inequalities.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the pipeline and
//! the command-line tool use.

pub mod dictionary;
pub mod dynsys;
pub mod iss;
pub mod koopman;
pub mod matlib;
pub mod scalar;

pub use scalar::Real;

/// Dense `f64` matrix.
pub type Matrix = matlib::Mat<f64>;
