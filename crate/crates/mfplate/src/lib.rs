//! Meshfree Galerkin solver for the Reissner-Mindlin plate model.
//!
//! Deflection and rotations are approximated with maximum-entropy basis
//! functions over the vertices of a triangular integration mesh; rotations
//! are enriched with per-cell barycenter nodes. Shear strain enters the
//! energy through a volume-averaged nodal projection, which keeps the system
//! symmetric, primal, and free of shear locking down to very small
//! thicknesses. Cell integration uses a quadratically consistent 3-point
//! scheme by default, with plain 3- and 6-point Gauss rules available for
//! comparison.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod maxent;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod solve;
pub mod sparse;
pub mod vanp;

pub type Vec2 = nalgebra::Vector2<f64>;

pub use error::{Error, Result};
