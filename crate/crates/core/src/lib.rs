//! Numerical laboratory for the frequency function, the doubling index and
//! nodal-set measure of Dirichlet solutions of `Δu + Vu = 0` in planar domains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dividing;
pub mod doubling;
pub mod error;
pub mod estimates;
pub mod field;
pub mod frequency;
pub mod geometry;
pub mod lifted;
pub mod mesh;
pub mod nodal;
pub mod quad;
pub mod sparse;
pub mod special;

pub use error::{LabError, Result};
