//! Ising root magnetization on Galton-Watson trees with sparse Bernoulli
//! external fields.
//!
//! The crate computes root log-likelihood ratios exactly with Lyons'
//! recursion, builds the pruned tree and samples it from its explicit
//! inhomogeneous branching-process law, evaluates nonlinear p-capacities of
//! resistance-weighted trees, and runs deterministic Monte Carlo scans.

pub mod distributions;
pub mod numerics;
pub mod rng;
pub mod stats;
pub mod tree;
pub mod field;
pub mod ising;
pub mod pruned_law;
pub mod capacity;
pub mod io;
pub mod experiments;
pub mod cli;
