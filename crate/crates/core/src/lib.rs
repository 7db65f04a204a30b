//! Numerical core for critical-drift elliptic problems.
//!
//! The crate is `no_std` and needs only `alloc`. It provides
//!
//! * [`lorentz`]: distribution functions, decreasing rearrangements, `L^{p,q}`
//!   quasi-norms and the small-scale weak quasi-norm `‖·‖_{p,∞,(r)}`;
//! * [`grid`]: ball, box and annulus domains, cell-centered grids with cut-cell
//!   weights, and the radial reduction;
//! * [`field`]: the singular drift fields, drift decompositions and mollification;
//! * [`solver`]: finite-volume assembly and solution of the primal problem
//!   `-Δu + div(ub) + cu = f` and its dual `-Δv - b·∇v + cv = g`;
//! * [`lab`]: experiment procedures that measure a priori ratios, level-set and
//!   oscillation diagnostics and the non-uniqueness threshold.
//!
//! IO, configuration and the command line live in the `critdrift` crate.
#![no_std]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod field;
pub mod grid;
pub mod lab;
pub mod lorentz;
pub mod sparse;
pub mod solver;

mod util;

pub use error::{Error, Result};
pub use field::{Drift, DriftDecomposition, MollifierSpec, VectorField};
pub use grid::{Domain, DomainKind, Grid, RadialGrid};
pub use lorentz::{LorentzSpec, Measured, ScalarField, SmallScaleSpec};
