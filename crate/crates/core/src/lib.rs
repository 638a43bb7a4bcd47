//! Simulation and verification toolkit for obliquely reflected diffusions in
//! convex polyhedral domains.
//!
//! The crate is organized around the pathwise construction of reflected
//! processes: [`geometry`] describes the domain and its reflection cones,
//! [`skorokhod`] constrains discretized paths to the domain, [`generator`]
//! carries drift/dispersion data and boundary-admissible test functions,
//! [`simulate`] drives reflected Euler-Maruyama ensembles, and [`verify`] /
//! [`stationary`] run the statistical checks that tie the simulated paths
//! back to the defining properties of the underlying process.

// Dense index loops mirror the math; the iterator forms read worse here.
#![allow(clippy::needless_range_loop)]

pub mod generator;
pub mod geometry;
pub mod linalg;
pub mod lp;
pub mod path;
pub mod rng;
pub mod simulate;
pub mod skorokhod;
pub mod stationary;
pub mod stats;
pub mod verify;

pub use geometry::{BoundaryClassification, Cone, Face, GeometryError, PolyhedralDomain};
pub use path::DiscretePath;
