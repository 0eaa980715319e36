//! Numerical laboratory for coupled fractional Laplacian systems.
//!
//! Fields live on a truncated, y-graded half-space grid. The fractional
//! Laplacian of a trace is realized both as a singular integral and as the
//! weighted normal flux of its extension, and the level-set geometry of
//! solutions feeds a family of Poincaré-type inequality checks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod config;
pub mod error;
pub mod extension;
pub mod fraclap;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod numerics;
pub mod pipeline;
pub mod potential;
pub mod presets;
pub mod report;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
