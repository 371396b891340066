//! Homogenization of periodic convex integrands with several fast scales,
//! with a lab for checking the limit numerically.

pub mod cell_solver;
pub mod cellset;
pub mod cli;
pub mod descent;
pub mod eps;
pub mod error;
pub mod exact;
pub mod expr;
pub mod hom;
pub mod integrand;
pub mod measure;
pub mod periodic;
pub mod scales;
pub mod spectral;

pub use error::{Error, Result};
