use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use kstore::report::{run_benchmark, summary_path, BenchConfig, BenchKind, OrderingChoice};
use kstore::{Handshake, GENERATOR_VERSION};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Bench {
    Sssp,
    Gp,
    Stress,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Ordering {
    Relaxed,
    Strict,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HandshakeArg {
    Acquire,
    Fence,
}

/// Runs the SSSP, graph-partitioning or stress benchmark over a matrix of
/// thread counts and seeds and writes per-run and summary CSVs.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    #[arg(long, value_enum)]
    bench: Bench,

    /// Node count (sssp, gp) or items pushed per thread (stress).
    #[arg(long)]
    size: Option<usize>,

    /// Edge probability.
    #[arg(long)]
    p: Option<f64>,

    /// Largest edge weight.
    #[arg(long, default_value_t = 1000)]
    max_w: u64,

    /// Relaxation bound for every task.
    #[arg(long)]
    k: Option<usize>,

    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    threads: Vec<usize>,

    /// Number of seeds; runs use seeds first-seed..first-seed+S.
    #[arg(long, default_value_t = 5)]
    seeds: u64,

    #[arg(long, default_value_t = 0)]
    first_seed: u64,

    #[arg(long, default_value_t = kstore::DEFAULT_BLOCK_SIZE)]
    block_size: usize,

    /// Slots probed per window before moving on (default: whole window).
    #[arg(long)]
    tests: Option<usize>,

    #[arg(long, value_enum, default_value_t = Ordering::Relaxed)]
    ordering: Ordering,

    #[arg(long, value_enum, default_value_t = HandshakeArg::Acquire)]
    handshake: HandshakeArg,

    /// Per-run CSV; the summary goes to `<stem>.summary.csv` beside it.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Check every run against the sequential oracle (or stress audit).
    #[arg(long)]
    verify: bool,
}

impl Args {
    fn into_config(self) -> BenchConfig {
        let mut cfg = BenchConfig::new(match self.bench {
            Bench::Sssp => BenchKind::Sssp,
            Bench::Gp => BenchKind::Gp,
            Bench::Stress => BenchKind::Stress,
        });
        if let Some(size) = self.size {
            cfg.size = size;
        }
        if let Some(p) = self.p {
            cfg.p = p;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        cfg.max_w = self.max_w;
        cfg.threads = self.threads;
        cfg.seeds = (self.first_seed..self.first_seed.saturating_add(self.seeds)).collect();
        cfg.block_size = self.block_size;
        cfg.tests = self.tests;
        cfg.ordering = match self.ordering {
            Ordering::Relaxed => OrderingChoice::Relaxed,
            Ordering::Strict => OrderingChoice::Strict,
            Ordering::Both => OrderingChoice::Both,
        };
        cfg.handshake = match self.handshake {
            HandshakeArg::Acquire => Handshake::Acquire,
            HandshakeArg::Fence => Handshake::Fence,
        };
        cfg.csv = self.csv;
        cfg.verify = self.verify;
        cfg
    }
}

fn main() -> Result<()> {
    let cfg = Args::parse().into_config();
    eprintln!(
        "{} size={} k={} threads={:?} seeds={} block_size={} generator={GENERATOR_VERSION}",
        cfg.bench.as_str(),
        cfg.size,
        cfg.k,
        cfg.threads,
        cfg.seeds.len(),
        cfg.block_size
    );
    let report = run_benchmark(&cfg).with_context(|| format!("{} benchmark failed", cfg.bench.as_str()))?;
    println!("bench,mode,threads,mean_runtime_s,sd_runtime_s");
    for s in &report.summary {
        println!(
            "{},{},{},{:.6},{:.6}",
            s.bench, s.mode, s.threads, s.mean_runtime_s, s.sd_runtime_s
        );
    }
    if let Some(path) = &cfg.csv {
        eprintln!(
            "wrote {} rows to {} and {}",
            report.rows.len(),
            path.display(),
            summary_path(path).display()
        );
    }
    Ok(())
}
