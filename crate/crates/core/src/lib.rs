//! Numerical laboratory for one-phase free boundary problems whose
//! potential is a negative power `u^(-gamma)`, `0 < gamma < 2`.
//!
//! Modules, bottom up:
//! - [`exponents`]: closed-form exponent algebra, profiles, hodograph map.
//! - [`field`]: uniform grids, scalar fields, stencils, CSV dumps.
//! - [`solver`]: discrete energies, projected descent, radial shooting.
//! - [`free_boundary`]: interface extraction, flatness, viscosity touching.
//! - [`degenerate_linear`]: the weighted linearized equation and barriers.
//! - [`experiments`]: sweeps and diagnostics producing reports.
//! - [`cli`]: the `fblab` command line.

pub mod cli;
pub mod contour;
pub mod degenerate_linear;
pub mod error;
pub mod experiments;
pub mod exponents;
pub mod field;
pub mod free_boundary;
pub mod linalg;
pub mod solver;

pub use error::{Error, Result};
pub use exponents::{GammaParams, Hodograph};
pub use field::{BoundarySpec, Facet, FacetCondition, Grid, ScalarField};
