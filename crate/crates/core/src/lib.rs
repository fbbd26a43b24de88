//! Discrete parabolic harmonic analysis on uniform space-time grids.
//!
//! The crate samples functions on a cell-centered lattice whose time step is
//! the square of the spatial step, so every parabolic cube of radius `m·h`
//! centered on a lattice vertex is an exact union of cells. On top of that
//! lattice it provides:
//!
//! * [`geometry`]: grids, parabolic regions, cell membership and means;
//! * [`weights`]: parabolic A_p characteristics, doubling, reverse Hölder;
//! * [`operators`]: parabolic maximal function, caloric Riesz potential,
//!   weighted Lebesgue norms;
//! * [`calculus`]: finite differences, distributional residuals of
//!   `u_t = div G`, odd/even reflections;
//! * [`generators`]: exact solutions, power weights and smooth test data;
//! * [`verify`]: end-to-end checks of weighted Sobolev-Poincaré inequalities;
//! * [`io`]: field files and report serialization.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod calculus;
pub mod error;
pub mod expr;
pub mod field;
pub mod generators;
pub mod geometry;
pub mod io;
pub mod operators;
pub mod sat;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use field::{MatrixField, ScalarField, VectorField};
pub use geometry::{Grid, HalfSpace, ParabolicRegion, Point, RegionKind};
pub use weights::WeightField;
