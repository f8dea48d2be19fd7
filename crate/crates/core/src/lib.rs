//! Simulation and exact-computation toolkit for critical Galton-Watson
//! trees, tree-indexed random walks on Z^d, branching capacity, branching
//! interlacements, and their torus limit experiments.

pub mod bcap;
pub mod decompose;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod infinite;
pub mod parallel;
pub mod report;
pub mod rng;
pub mod spatial;
pub mod stats;
pub mod torus;
pub mod tree;

pub use error::{Error, Result};
