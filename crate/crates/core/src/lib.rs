//! Numerical unfolding of the codimension-two point where a planar
//! piecewise-smooth continuous system has a boundary equilibrium with purely
//! imaginary eigenvalues.
//!
//! The pipeline: [`system`] defines the piecewise system, [`flow`] integrates
//! it with event handling, [`normalform`] reduces it to companion normal form
//! and extracts the invariants, [`equilibria`] and [`orbits`] trace the Hopf,
//! grazing and saddle-node loci, [`dmaps`] holds the asymptotic return maps,
//! and [`scaling`] fits power laws to the traced loci.

pub mod curve;
pub mod dmaps;
pub mod equilibria;
pub mod fixtures;
pub mod flow;
pub mod linalg;
pub mod normalform;
pub mod numdiff;
pub mod orbits;
pub mod roots;
pub mod scaling;
pub mod system;

pub use linalg::{Mat2, Vec2};
pub use system::{NormalFormSystem, ParamVector, PiecewiseSystem, Side};
