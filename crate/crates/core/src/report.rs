//! Benchmark matrix runner and CSV reporting.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Handshake, OrderingMode, StorageConfig, DEFAULT_BLOCK_SIZE};
use crate::conformance::{stress, Mode, StressParams};
use crate::error::{Error, Result};
use crate::scheduler::{RunStats, SchedulerConfig};
use crate::workloads::{gp, sssp, BenchGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchKind {
    Sssp,
    Gp,
    Stress,
}

impl BenchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchKind::Sssp => "sssp",
            BenchKind::Gp => "gp",
            BenchKind::Stress => "stress",
        }
    }
}

/// Which ordering modes a benchmark runs under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderingChoice {
    Relaxed,
    Strict,
    Both,
}

impl OrderingChoice {
    pub fn modes(self) -> &'static [OrderingMode] {
        match self {
            OrderingChoice::Relaxed => &[OrderingMode::Relaxed],
            OrderingChoice::Strict => &[OrderingMode::Strict],
            OrderingChoice::Both => &[OrderingMode::Relaxed, OrderingMode::Strict],
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub bench: BenchKind,
    /// Node count for graph benchmarks, items per thread for stress.
    pub size: usize,
    pub p: f64,
    pub max_w: u64,
    pub k: usize,
    pub threads: Vec<usize>,
    pub seeds: Vec<u64>,
    pub block_size: usize,
    pub tests: Option<usize>,
    pub ordering: OrderingChoice,
    pub handshake: Handshake,
    pub csv: Option<PathBuf>,
    /// Compare every run against the sequential oracle.
    pub verify: bool,
}

impl BenchConfig {
    pub fn new(bench: BenchKind) -> Self {
        let (size, p) = match bench {
            BenchKind::Sssp => (1000, 0.01),
            BenchKind::Gp => (12, 0.9),
            BenchKind::Stress => (100_000, 0.0),
        };
        BenchConfig {
            bench,
            size,
            p,
            max_w: 1000,
            k: 1024,
            threads: vec![1, 2, 4, 8],
            seeds: (0..5).collect(),
            block_size: DEFAULT_BLOCK_SIZE,
            tests: None,
            ordering: OrderingChoice::Relaxed,
            handshake: Handshake::Acquire,
            csv: None,
            verify: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..=1.0).contains(&self.p) {
            return bad("p must lie in [0, 1]");
        }
        if self.size == 0 || self.max_w == 0 || self.block_size == 0 {
            return bad("size, max_w and block_size must be at least 1");
        }
        if self.threads.is_empty() || self.threads.contains(&0) {
            return bad("thread counts must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("need at least one seed");
        }
        if self.tests == Some(0) {
            return bad("tests must be at least 1");
        }
        Ok(())
    }

    fn storage(&self, mode: OrderingMode, seed: u64) -> StorageConfig {
        let mut cfg = StorageConfig::default()
            .with_block_size(self.block_size)
            .with_ordering(mode)
            .with_handshake(self.handshake)
            .with_seed(seed);
        cfg.tests = self.tests;
        cfg
    }
}

/// One benchmark run; field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub bench: &'static str,
    pub mode: &'static str,
    pub handshake: &'static str,
    pub threads: usize,
    pub seed: u64,
    pub runtime_s: f64,
    pub tasks_executed: u64,
    pub heap_discards: u64,
    pub blocks_linked: u64,
    pub blocks_reused: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub bench: &'static str,
    pub mode: &'static str,
    pub threads: usize,
    pub mean_runtime_s: f64,
    pub sd_runtime_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Output {
    Distances(Vec<u64>),
    Cut(u64),
    Payloads(Vec<u64>),
}

/// Mean and sample standard deviation; sd is 0 for a single sample.
pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn row_from_stats(config: &BenchConfig, mode: OrderingMode, threads: usize, seed: u64, stats: &RunStats) -> BenchRow {
    let totals = stats.totals();
    BenchRow {
        bench: config.bench.as_str(),
        mode: mode.as_str(),
        handshake: config.handshake.as_str(),
        threads,
        seed,
        runtime_s: stats.wall_time.as_secs_f64(),
        tasks_executed: stats.executed,
        heap_discards: totals.heap_discards,
        blocks_linked: totals.blocks_linked,
        blocks_reused: totals.blocks_reused,
    }
}

/// Runs every `(mode, threads, seed)` combination.
///
/// With `verify`, graph results must equal their sequential oracle and
/// stress runs must pass their audit. With both ordering modes, functional
/// outputs must agree between modes for every `(threads, seed)`.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut report = BenchReport::default();
    let mut graphs: BTreeMap<u64, BenchGraph> = BTreeMap::new();
    let mut oracles: BTreeMap<u64, Output> = BTreeMap::new();
    let mut first_mode: BTreeMap<(usize, u64), (OrderingMode, Output)> = BTreeMap::new();
    let bench = config.bench.as_str();

    for &mode in config.ordering.modes() {
        for &threads in &config.threads {
            for &seed in &config.seeds {
                let (row, output) = match config.bench {
                    BenchKind::Stress => {
                        let mut params = StressParams::new(threads, config.size, config.k, config.block_size)
                            .with_mode(Mode {
                                ordering: mode,
                                handshake: config.handshake,
                            })
                            .with_seed(seed);
                        params.config.tests = config.tests;
                        params.config.audit = config.verify;
                        let r = stress(&params)?;
                        if config.verify {
                            r.check()?;
                        }
                        let row = BenchRow {
                            bench,
                            mode: mode.as_str(),
                            handshake: config.handshake.as_str(),
                            threads,
                            seed,
                            runtime_s: r.runtime.as_secs_f64(),
                            tasks_executed: r.popped,
                            heap_discards: r.counters.heap_discards,
                            blocks_linked: r.counters.blocks_linked,
                            blocks_reused: r.counters.blocks_reused,
                        };
                        (row, Output::Payloads(r.payloads))
                    }
                    BenchKind::Sssp | BenchKind::Gp => {
                        let graph = match graphs.entry(seed) {
                            Entry::Occupied(e) => e.into_mut(),
                            Entry::Vacant(e) => {
                                e.insert(BenchGraph::generate(config.size, config.p, config.max_w, seed)?)
                            }
                        };
                        let sched = SchedulerConfig::from(config.storage(mode, seed));
                        let (stats, output) = if config.bench == BenchKind::Sssp {
                            let run = sssp::parallel(graph, 0, config.k, threads, &sched)?;
                            (run.stats, Output::Distances(run.dist))
                        } else {
                            let run = gp::parallel(graph, threads, config.k, &sched)?;
                            (run.stats, Output::Cut(run.best))
                        };
                        if config.verify {
                            let oracle = match oracles.entry(seed) {
                                Entry::Occupied(e) => e.into_mut(),
                                Entry::Vacant(e) => e.insert(match config.bench {
                                    BenchKind::Sssp => Output::Distances(sssp::sequential(graph, 0)?),
                                    _ => Output::Cut(gp::sequential(graph)?),
                                }),
                            };
                            if *oracle != output {
                                return Err(Error::OracleMismatch { bench, threads, seed });
                            }
                        }
                        (row_from_stats(config, mode, threads, seed, &stats), output)
                    }
                };
                match first_mode.get(&(threads, seed)) {
                    Some((left, expected)) if *expected != output => {
                        return Err(Error::DifferentialMismatch {
                            bench,
                            left: left.as_str().to_string(),
                            right: mode.as_str().to_string(),
                            threads,
                            seed,
                        });
                    }
                    Some(_) => {}
                    None => {
                        // Only needed when a second mode follows.
                        if config.ordering == OrderingChoice::Both {
                            first_mode.insert((threads, seed), (mode, output));
                        }
                    }
                }
                report.rows.push(row);
            }
        }
    }
    report.summary = summarize(&report.rows);
    if let Some(path) = &config.csv {
        write_csv(path, &report)?;
    }
    Ok(report)
}

/// Mean and sd of runtime per `(bench, mode, threads)`, in first-seen order.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&'static str, &'static str, usize)> = Vec::new();
    let mut samples: BTreeMap<(&'static str, &'static str, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (r.bench, r.mode, r.threads);
        if !samples.contains_key(&key) {
            keys.push(key);
        }
        samples.entry(key).or_default().push(r.runtime_s);
    }
    keys.into_iter()
        .map(|key| {
            let (mean, sd) = mean_sd(&samples[&key]);
            SummaryRow {
                bench: key.0,
                mode: key.1,
                threads: key.2,
                mean_runtime_s: mean,
                sd_runtime_s: sd,
            }
        })
        .collect()
}

/// `<dir>/<stem>.summary.csv` next to the row file.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    path.with_file_name(format!("{stem}.summary.csv"))
}

/// Writes the row CSV to `path` and the summary CSV beside it.
pub fn write_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    if report.rows.is_empty() {
        w.write_record(ROW_HEADER.split(','))?;
    }
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(File::create(summary_path(path))?);
    if report.summary.is_empty() {
        w.write_record(SUMMARY_HEADER.split(','))?;
    }
    for row in &report.summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const ROW_HEADER: &str =
    "bench,mode,handshake,threads,seed,runtime_s,tasks_executed,heap_discards,blocks_linked,blocks_reused";
pub const SUMMARY_HEADER: &str = "bench,mode,threads,mean_runtime_s,sd_runtime_s";
