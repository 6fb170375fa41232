//! First-passage percolation on Z^d.
//!
//! Simulation side: hashed edge weights on an implicit lattice ([`lattice`]), Dijkstra
//! passage times ([`engine`]) and replica estimators ([`estimators`]).
//! Analytic side: counting oracles ([`combinatorics`]) and the certified bound engine
//! ([`certifier`]) that decides, dimension by dimension, whether the limit shape is
//! excluded from being the Euclidean ball, strictly inside the cube, or strictly
//! containing the diamond.

pub mod certifier;
pub mod combinatorics;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod special;

pub use distributions::{DistributionSpec, Law, LocalSlope};
pub use error::{FppError, Result};

/// Version string embedded in every emitted artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
