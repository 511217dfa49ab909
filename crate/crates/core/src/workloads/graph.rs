//! Seeded random graphs for the benchmarks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub to: usize,
    pub weight: u64,
}

/// Undirected weighted graph in compressed adjacency form. Every edge is
/// stored in both endpoint lists with the same weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchGraph {
    offsets: Vec<usize>,
    adjacency: Vec<Edge>,
    edges: usize,
}

impl BenchGraph {
    /// Samples every unordered pair `i < j` with probability `p`; included
    /// edges get a weight uniform in `[1, max_w]`.
    pub fn generate(n: usize, p: f64, max_w: u64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("graph needs at least one node".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability {p} outside [0, 1]")));
        }
        if max_w == 0 {
            return Err(Error::Config("max_w must be at least 1".into()));
        }
        let mut rng = stream_rng(seed, Stream::Graph, 0);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j, rng.random_range(1..=max_w)));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, u64)]) -> Result<Self> {
        let mut degree = vec![0usize; n];
        for &(u, v, _) in edges {
            if u >= n || v >= n {
                return Err(Error::Config(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            if u == v {
                return Err(Error::Config(format!("self-loop at {u}")));
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut adjacency = vec![Edge { to: 0, weight: 0 }; offsets[n]];
        for &(u, v, w) in edges {
            adjacency[fill[u]] = Edge { to: v, weight: w };
            fill[u] += 1;
            adjacency[fill[v]] = Edge { to: u, weight: w };
            fill[v] += 1;
        }
        Ok(BenchGraph {
            offsets,
            adjacency,
            edges: edges.len(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[Edge] {
        &self.adjacency[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Dense `n × n` weight matrix, 0 where there is no edge.
    pub fn weight_matrix(&self) -> Vec<u64> {
        let n = self.node_count();
        let mut m = vec![0u64; n * n];
        for u in 0..n {
            for e in self.neighbors(u) {
                m[u * n + e.to] = e.weight;
            }
        }
        m
    }

    /// Canonical byte encoding, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.adjacency.len() * 16);
        out.extend_from_slice(&(self.node_count() as u64).to_le_bytes());
        for u in 0..self.node_count() {
            for e in self.neighbors(u) {
                out.extend_from_slice(&(e.to as u64).to_le_bytes());
                out.extend_from_slice(&e.weight.to_le_bytes());
            }
            out.push(0xff);
        }
        out
    }
}
