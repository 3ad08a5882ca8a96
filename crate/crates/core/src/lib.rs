//! Transport densities for optimal transport from an interior density to
//! the boundary of a planar domain.
//!
//! The crate builds symmetrization maps (face reflections for convex
//! polygons, a radial contraction for round polygons), deposits the
//! transport density of map-induced plans by exact segment–cell traversal,
//! cross-checks it with a grid minimal-flow solver, and reproduces a
//! trapeze-to-segment example whose transport density is `L^p` exactly for
//! `p < 3`.

pub mod beckmann;
pub mod counterexample;
pub mod exec;
pub mod fields;
pub mod geometry;
pub mod point;
pub mod raydensity;
pub mod scenario;
pub mod symmetrize;

pub use exec::Exec;
pub use point::{BoundingBox, Point};
