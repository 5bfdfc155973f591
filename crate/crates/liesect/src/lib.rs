//! liesect solves functional equations of local Lie group sections by
//! reducing them to an equivalent differential equation, and verifies that
//! equivalence numerically on grids of residuals.
//!
//! The pieces, bottom to top:
//!
//! - [`expr`]: expression DSL with forward-mode directional derivatives,
//!   used by custom product rules and projections.
//! - [`group`]: coordinatized local groups, fibrations and their
//!   differentials.
//! - [`algebra`]: finite-difference Lie bracket, subalgebra closure and
//!   transversality checks.
//! - [`solver`]: two independent constructions of the section: flowing
//!   left-invariant fields plus Newton inversion of the projection, and
//!   direct path integration of the differential equation.
//! - [`verify`]: residual checks for the functional equation, the identity
//!   condition, the differential equation and tangency, aggregated over
//!   sample grids.
//! - [`config`] and [`cli`]: the JSON problem format and the command-line
//!   surface.

pub mod algebra;
pub mod cli;
pub mod config;
pub mod expr;
pub mod group;
pub mod numeric;
pub mod solver;
pub mod verify;

pub use group::{builtin_abelian_exp, builtin_triangular_affine, FibrationChart, GroupChart};
