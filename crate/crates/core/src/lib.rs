//! Minimizers of gradient-constrained convex functionals and random stepped
//! surfaces.
//!
//! The crate has three layers:
//! - geometry and energy densities: the constraint polygon `N`
//!   ([`geometry`]), surface tensions on it ([`tension`]), and the smooth
//!   penalized family used by the solver ([`penalty`]);
//! - the variational side: boundary data and obstacles ([`boundary`]),
//!   piecewise-linear fields on triangulations ([`mesh`], [`field`]), the
//!   penalized Newton solver ([`solver`]), and regularity diagnostics on its
//!   output ([`diagnostics`]);
//! - the probabilistic side: lozenge tilings of triangular-lattice regions as
//!   integer height functions with Glauber dynamics and exact enumeration
//!   ([`sampler`]).
//!
//! Text I/O (fields, meshes, rasters, round-trip float formatting) lives in
//! [`io`].

pub mod boundary;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
mod linalg;
pub mod lobachevsky;
pub mod mesh;
pub mod penalty;
pub mod sampler;
pub mod solver;
pub mod tension;

pub use geometry::GradientPolygon;
pub use penalty::{build_penalized, PenaltySchedule, PenalizedTension};
pub use tension::TensionModel;
