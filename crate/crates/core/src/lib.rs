//! Computational toolkit for Stratonovich signatures of planar Brownian paths.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: rounded squares and the ε-grid box families H ⊂ K ⊂ Z ⊂ V.
//! * [`rng`] and [`stochastic`]: counter-based Gaussian streams, dyadic Brownian
//!   sampling with bridge refinement, and the area diffusion.
//! * [`signature`]: truncated tensor-algebra signatures of piecewise-linear paths.
//! * [`forms`]: compactly supported 1-forms, line integrals and iterated form integrals.
//! * [`tracer`]: hitting-time traces of a path through a box family.
//! * [`reconstruct`]: extended-signature tables over lattice words and polygon recovery.
//! * [`exit`]: absorbing-boundary problems and interchangeable exit samplers.

pub mod exit;
pub mod forms;
pub mod geometry;
pub mod reconstruct;
pub mod rng;
pub mod signature;
pub mod stochastic;
pub mod tracer;

pub use geometry::{BoxFamily, BoxKind, GridSpec, LatticePoint, Point, RoundedSquare};
pub use rng::Seed;
pub use stochastic::PiecewisePath;
