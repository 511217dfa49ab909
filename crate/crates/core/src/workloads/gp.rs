//! Balanced graph bipartitioning: exhaustive oracle and a parallel
//! branch-and-bound on the relaxed storage.
//!
//! Set A takes `n / 2` nodes (rounded down), set B the rest. Nodes are fixed
//! in index order, one per branching step.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::graph::BenchGraph;
use crate::error::{Error, Result};
use crate::item::Strategy;
use crate::scheduler::{self, RunStats, SchedulerConfig, Task};

/// Largest graph the exhaustive oracle accepts.
pub const ORACLE_MAX_NODES: usize = 20;
/// Largest graph the branch-and-bound accepts (assignments are bitmasks).
pub const MAX_NODES: usize = 64;
/// Upper bound before any complete partition is known.
pub const NO_BOUND: u64 = u64::MAX;

/// Minimum cut weight over all partitions with `|A| = n / 2`, by enumeration.
pub fn sequential(graph: &BenchGraph) -> Result<u64> {
    let n = graph.node_count();
    if n > ORACLE_MAX_NODES {
        return Err(Error::OracleGuard(format!(
            "exhaustive bipartitioning limited to {ORACLE_MAX_NODES} nodes, got {n}"
        )));
    }
    let size_a = (n / 2) as u32;
    let mut best = NO_BOUND;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() != size_a {
            continue;
        }
        best = best.min(cut_weight(graph, mask as u64));
    }
    Ok(best)
}

/// Total weight of edges with exactly one endpoint in `in_a`.
pub fn cut_weight(graph: &BenchGraph, in_a: u64) -> u64 {
    let mut cut = 0;
    for u in 0..graph.node_count() {
        for e in graph.neighbors(u) {
            if u < e.to && ((in_a >> u) & 1) != ((in_a >> e.to) & 1) {
                cut += e.weight;
            }
        }
    }
    cut
}

/// A partial assignment: nodes `0..depth` are fixed, bit `i` of `in_a` set
/// when node `i` went to A.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subproblem {
    pub depth: usize,
    pub in_a: u64,
    pub count_a: usize,
    /// Weight of edges cut among the fixed nodes.
    pub cut: u64,
    pub lower_bound: u64,
}

/// A subtree discarded because its bound reached the incumbent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PruneRecord {
    pub subproblem: Subproblem,
    pub upper_bound: u64,
}

#[derive(Clone, Debug)]
pub struct GpRun {
    pub best: u64,
    pub stats: RunStats,
    pub pruned: u64,
}

struct Instance {
    n: usize,
    cap_a: usize,
    cap_b: usize,
    weights: Vec<u64>,
}

impl Instance {
    fn new(graph: &BenchGraph) -> Self {
        let n = graph.node_count();
        Instance {
            n,
            cap_a: n / 2,
            cap_b: n - n / 2,
            weights: graph.weight_matrix(),
        }
    }

    fn w(&self, u: usize, v: usize) -> u64 {
        self.weights[u * self.n + v]
    }

    /// Weights from `v` into the fixed nodes of A and of B.
    fn pull(&self, v: usize, depth: usize, in_a: u64) -> (u64, u64) {
        let (mut to_a, mut to_b) = (0, 0);
        for u in 0..depth {
            if (in_a >> u) & 1 == 1 {
                to_a += self.w(v, u);
            } else {
                to_b += self.w(v, u);
            }
        }
        (to_a, to_b)
    }

    /// Cut so far plus, per free node, the cheaper side it may still join.
    /// Edges between free nodes are ignored, so this never overestimates.
    fn lower_bound(&self, depth: usize, in_a: u64, count_a: usize, cut: u64) -> u64 {
        let room_a = self.cap_a - count_a;
        let room_b = self.cap_b - (depth - count_a);
        let mut bound = cut;
        for v in depth..self.n {
            let (to_a, to_b) = self.pull(v, depth, in_a);
            // Joining A cuts the edges into B and vice versa.
            bound += match (room_a > 0, room_b > 0) {
                (true, true) => to_a.min(to_b),
                (true, false) => to_b,
                (false, true) => to_a,
                (false, false) => unreachable!("free node without room"),
            };
        }
        bound
    }

    fn root(&self) -> Subproblem {
        Subproblem {
            depth: 0,
            in_a: 0,
            count_a: 0,
            cut: 0,
            lower_bound: self.lower_bound(0, 0, 0, 0),
        }
    }

    fn children(&self, s: &Subproblem) -> impl Iterator<Item = Subproblem> + '_ {
        let s = *s;
        let v = s.depth;
        let count_b = s.depth - s.count_a;
        let (to_a, to_b) = self.pull(v, s.depth, s.in_a);
        let into_a = (s.count_a < self.cap_a).then(|| (s.in_a | (1 << v), s.count_a + 1, s.cut + to_b));
        let into_b = (count_b < self.cap_b).then(|| (s.in_a, s.count_a, s.cut + to_a));
        into_a
            .into_iter()
            .chain(into_b)
            .map(move |(in_a, count_a, cut)| Subproblem {
                depth: v + 1,
                in_a,
                count_a,
                cut,
                lower_bound: self.lower_bound(v + 1, in_a, count_a, cut),
            })
    }
}

/// Smaller bound first, then deeper subproblems.
pub fn priority(lower_bound: u64, depth: usize) -> i64 {
    let key = -(lower_bound as i128) * 128 + depth as i128;
    key.max(i64::MIN as i128) as i64
}

fn lower_to(best: &AtomicU64, value: u64) {
    let mut current = best.load(Ordering::Relaxed);
    while value < current {
        match best.compare_exchange_weak(current, value, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => break,
            Err(observed) => current = observed,
        }
    }
}

pub fn parallel(graph: &BenchGraph, threads: usize, k: usize, config: &SchedulerConfig) -> Result<GpRun> {
    parallel_inner(graph, threads, k, config, None)
}

/// As [`parallel`], also returning every pruned subproblem with the
/// incumbent it was pruned against.
pub fn parallel_recording_prunes(
    graph: &BenchGraph,
    threads: usize,
    k: usize,
    config: &SchedulerConfig,
) -> Result<(GpRun, Vec<PruneRecord>)> {
    let log = Mutex::new(Vec::new());
    let run = parallel_inner(graph, threads, k, config, Some(&log))?;
    Ok((run, log.into_inner().expect("prune log poisoned")))
}

fn parallel_inner(
    graph: &BenchGraph,
    threads: usize,
    k: usize,
    config: &SchedulerConfig,
    log: Option<&Mutex<Vec<PruneRecord>>>,
) -> Result<GpRun> {
    let n = graph.node_count();
    if n > MAX_NODES {
        return Err(Error::Config(format!(
            "bipartitioning limited to {MAX_NODES} nodes, got {n}"
        )));
    }
    let inst = Instance::new(graph);
    let best = AtomicU64::new(NO_BOUND);
    let pruned = AtomicU64::new(0);
    let prune = |s: Subproblem, upper_bound: u64| {
        pruned.fetch_add(1, Ordering::Relaxed);
        if let Some(log) = log {
            log.lock().expect("prune log poisoned").push(PruneRecord {
                subproblem: s,
                upper_bound,
            });
        }
    };

    let root = inst.root();
    if n == root.depth {
        return Ok(GpRun {
            best: 0,
            stats: scheduler::run(threads, Vec::<Task<Subproblem>>::new(), config, |_, _| {})?,
            pruned: 0,
        });
    }
    let roots = vec![Task::new(Strategy::new(priority(root.lower_bound, 0), k), root)];
    let stats = scheduler::run(threads, roots, config, |s, spawner| {
        let ub = best.load(Ordering::Relaxed);
        if s.lower_bound >= ub {
            prune(s, ub);
            return;
        }
        for child in inst.children(&s) {
            if child.depth == n {
                lower_to(&best, child.cut);
                continue;
            }
            let ub = best.load(Ordering::Relaxed);
            if child.lower_bound >= ub {
                prune(child, ub);
            } else {
                spawner.spawn(Strategy::new(priority(child.lower_bound, child.depth), k), child);
            }
        }
    })?;

    Ok(GpRun {
        best: best.into_inner(),
        stats,
        pruned: pruned.into_inner(),
    })
}
