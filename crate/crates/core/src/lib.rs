//! Nonlinear consensus dynamics `x' = D^-1 A s(x) - x` on simple undirected graphs.
//!
//! The crate covers graph construction, the spectrum of the random-walk
//! matrix, admissible signal functions and their fixed points, RK4
//! simulation, equilibrium search and bifurcation sweeps, and ISS bounds for
//! clusters of agents.

pub mod bifurcation;
pub mod cluster;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod signal;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{Graph, Partition, SubgraphDecomposition, Topology};
pub use signal::SignalFunction;
