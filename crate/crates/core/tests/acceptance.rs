//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every scenario runs under all four ordering/handshake modes; the
//! differential criterion compares the functional outputs collected here.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use kstore::conformance::{explore_smallest, lifecycle_audit, stress, LifecycleParams, Mode, StressParams};
use kstore::report::{run_benchmark, summary_path, BenchConfig, BenchKind, OrderingChoice};
use kstore::workloads::{gp, sssp, BenchGraph};
use kstore::{SchedulerConfig, StorageConfig};

type Outcome = Result<String, String>;

/// Functional outputs per scenario key, per mode.
#[derive(Default)]
struct Outputs(BTreeMap<String, Vec<(Mode, Vec<u64>)>>);

impl Outputs {
    fn record(&mut self, key: String, mode: Mode, output: Vec<u64>) {
        self.0.entry(key).or_default().push((mode, output));
    }
}

fn sched(mode: Mode, block_size: usize) -> SchedulerConfig {
    SchedulerConfig::from(mode.apply(StorageConfig::default().with_block_size(block_size)))
}

fn sssp_equivalence(outputs: &mut Outputs) -> Outcome {
    let mut runs = 0;
    let mut slowest = 0.0f64;
    for seed in 0..20 {
        let graph = BenchGraph::generate(1000, 0.01, 100_000_000, seed).map_err(|e| e.to_string())?;
        let oracle = sssp::sequential(&graph, 0).map_err(|e| e.to_string())?;
        for threads in [1, 2, 4, 8] {
            for mode in Mode::ALL {
                let run = sssp::parallel(&graph, 0, 1024, threads, &sched(mode, 128)).map_err(|e| e.to_string())?;
                slowest = slowest.max(run.stats.wall_time.as_secs_f64());
                if run.dist != oracle {
                    let diff = run.dist.iter().zip(&oracle).filter(|(a, b)| a != b).count();
                    return Err(format!(
                        "seed {seed}, {threads} threads, {}: {diff} distances differ",
                        mode.label()
                    ));
                }
                outputs.record(format!("sssp/{seed}/{threads}"), mode, run.dist);
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs exact, slowest {slowest:.3}s"))
}

fn gp_equivalence(outputs: &mut Outputs) -> Outcome {
    let mut runs = 0;
    let mut slowest = 0.0f64;
    for seed in 0..10 {
        let graph = BenchGraph::generate(12, 0.9, 1000, seed).map_err(|e| e.to_string())?;
        let oracle = gp::sequential(&graph).map_err(|e| e.to_string())?;
        for threads in [1, 4] {
            for mode in Mode::ALL {
                let run = gp::parallel(&graph, threads, 16, &sched(mode, 128)).map_err(|e| e.to_string())?;
                slowest = slowest.max(run.stats.wall_time.as_secs_f64());
                if run.best != oracle {
                    return Err(format!(
                        "seed {seed}, {threads} threads, {}: got {} expected {oracle}",
                        mode.label(),
                        run.best
                    ));
                }
                outputs.record(format!("gp/{seed}/{threads}"), mode, vec![run.best]);
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs exact, slowest {slowest:.3}s"))
}

fn stress_exactly_once(outputs: &mut Outputs) -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for k in [0, 4, 512] {
        for mode in Mode::ALL {
            let report = stress(&StressParams::new(8, 100_000, k, 64).with_mode(mode).with_seed(k as u64))
                .map_err(|e| e.to_string())?;
            report.check().map_err(|e| format!("k={k}, {}: {e}", mode.label()))?;
            if mode == Mode::RELAXED {
                notes.push(format!(
                    "k={k}: tail {} max spin {} in {:.2}s",
                    report.final_tail,
                    report.max_slot_spin,
                    report.runtime.as_secs_f64()
                ));
            }
            outputs.record(format!("stress/{k}"), mode, report.payloads);
        }
    }
    Ok(format!(
        "0 lost, 0 duplicates, fill holds; {}; total {:.1}s",
        notes.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn block_lifecycle(outputs: &mut Outputs) -> Outcome {
    let max_blocks = 4 * 2;
    let mut notes = Vec::new();
    for mode in Mode::ALL {
        for k in [0, 1] {
            let mut params = LifecycleParams::new(2, 2, 100);
            params.mode = mode;
            params.k = k;
            let r = lifecycle_audit(&params).map_err(|e| e.to_string())?;
            r.stress.check().map_err(|e| format!("{} k={k}: {e}", mode.label()))?;
            if let Err(e) = &r.audit {
                return Err(format!("{} k={k}: {e}", mode.label()));
            }
            if !r.passed(100, max_blocks) {
                return Err(format!(
                    "{} k={k}: cleanups {} reused {} allocated {} violations {}",
                    mode.label(),
                    r.cleanups,
                    r.blocks_reused,
                    r.blocks_allocated,
                    r.violations
                ));
            }
            if mode == Mode::RELAXED {
                notes.push(format!(
                    "k={k}: {} epochs, {} reuses, {} blocks",
                    r.cleanups, r.blocks_reused, r.blocks_allocated
                ));
            }
            outputs.record(format!("lifecycle/{k}"), mode, r.stress.payloads.clone());
        }
    }
    Ok(notes.join(", "))
}

fn ordering_differential(outputs: &Outputs) -> Outcome {
    if outputs.0.is_empty() {
        return Err("no scenario outputs recorded".into());
    }
    for (key, runs) in &outputs.0 {
        if runs.len() != Mode::ALL.len() {
            return Err(format!(
                "{key}: only {} of {} modes completed",
                runs.len(),
                Mode::ALL.len()
            ));
        }
        let (base_mode, base) = &runs[0];
        for (mode, out) in &runs[1..] {
            if out != base {
                return Err(format!("{key}: {} differs from {}", mode.label(), base_mode.label()));
            }
        }
    }
    Ok(format!("{} scenarios identical across 4 modes", outputs.0.len()))
}

fn race_freedom() -> Outcome {
    let start = Instant::now();
    let e = explore_smallest(10_000, 0x5eed);
    if e.failures > 0 {
        return Err(format!(
            "{} of {} reps failed; first: {:?}",
            e.failures, e.reps, e.first_failure
        ));
    }
    Ok(format!(
        "{} randomized-yield reps clean, max spin {}, {} reuses, {:.1}s",
        e.reps,
        e.max_slot_spin,
        e.blocks_reused,
        start.elapsed().as_secs_f64()
    ))
}

fn throughput_report() -> Outcome {
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("throughput.csv");
    let mut cfg = BenchConfig::new(BenchKind::Stress);
    cfg.size = 100_000;
    cfg.k = 4;
    cfg.block_size = 64;
    cfg.threads = vec![8];
    cfg.seeds = (0..3).collect();
    cfg.ordering = OrderingChoice::Both;
    cfg.verify = true;
    cfg.csv = Some(path.clone());
    let report = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let means: Vec<String> = report
        .summary
        .iter()
        .map(|s| format!("{} {:.3}s ± {:.3}", s.mode, s.mean_runtime_s, s.sd_runtime_s))
        .collect();
    Ok(format!(
        "{}; written to {}",
        means.join(", "),
        summary_path(&path).display()
    ))
}

fn main() -> ExitCode {
    let mut outputs = Outputs::default();
    let mut failed = 0;
    let mut line = |name: &str, gating: bool, outcome: Outcome| match outcome {
        Ok(detail) => println!("[PASS] {name}: {detail}"),
        Err(detail) if gating => {
            failed += 1;
            println!("[FAIL] {name}: {detail}");
        }
        Err(detail) => println!("[INFO] {name} (report-only) did not complete: {detail}"),
    };
    line("sssp oracle equivalence", true, sssp_equivalence(&mut outputs));
    line("gp oracle equivalence", true, gp_equivalence(&mut outputs));
    line("stress exactly-once", true, stress_exactly_once(&mut outputs));
    line("block lifecycle", true, block_lifecycle(&mut outputs));
    line("ordering-mode differential", true, ordering_differential(&outputs));
    line("race freedom", true, race_freedom());
    match throughput_report() {
        Ok(detail) => println!("[REPORT] strict vs relaxed throughput: {detail}"),
        Err(detail) => line("strict vs relaxed throughput", false, Err(detail)),
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
