//! Solves the div-curl problem curl U = F, div U = 0, U.n = g on bounded
//! tetrahedral domains by constructing an explicit stream function A with
//! U = curl A.
//!
//! The construction interpolates the vorticity into a Raviart-Thomas space,
//! extends it by zero, cancels the spurious surface divergence with a
//! tangential correction from a mixed Laplace-Beltrami solve, fixes the
//! normal trace with a hypersingular boundary integral solve, and evaluates
//! everything through Newton and single-layer potentials.

pub mod error;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod potentials;
pub mod spaces;
pub mod surface_solvers;
pub mod fields;
pub mod quadrature;

pub use error::{Error, Result};
pub use quadrature::Vec3;
