//! Benchmark workloads with sequential oracles.

pub mod gp;
pub mod graph;
pub mod sssp;

pub use graph::{BenchGraph, Edge};
