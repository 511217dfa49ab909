//! Executable audits of the storage's concurrency guarantees.
//!
//! Every audit runs real threads against a fresh storage and checks, at
//! quiescence, that each pushed payload was popped exactly once, that every
//! index below the final tail was published, and that each block epoch ended
//! in exactly one cleanup.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::block::BlockHistory;
use crate::config::{Handshake, OrderingMode, StorageConfig};
use crate::error::{Error, Result};
use crate::item::Strategy;
use crate::place::{PerformanceCounters, Place, ScanStats};
use crate::rng::{stream_rng, Stream};
use crate::scheduler::{Backoff, SchedulerConfig};
use crate::storage::GlobalTaskStorage;
use crate::workloads::{gp, sssp, BenchGraph};

/// Ordering mode plus handshake variant; the axis differential runs vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub ordering: OrderingMode,
    pub handshake: Handshake,
}

impl Mode {
    pub const RELAXED: Mode = Mode {
        ordering: OrderingMode::Relaxed,
        handshake: Handshake::Acquire,
    };
    pub const RELAXED_FENCE: Mode = Mode {
        ordering: OrderingMode::Relaxed,
        handshake: Handshake::Fence,
    };
    pub const STRICT: Mode = Mode {
        ordering: OrderingMode::Strict,
        handshake: Handshake::Acquire,
    };
    pub const STRICT_FENCE: Mode = Mode {
        ordering: OrderingMode::Strict,
        handshake: Handshake::Fence,
    };
    pub const ALL: [Mode; 4] = [Mode::RELAXED, Mode::RELAXED_FENCE, Mode::STRICT, Mode::STRICT_FENCE];

    pub fn apply(self, config: StorageConfig) -> StorageConfig {
        config.with_ordering(self.ordering).with_handshake(self.handshake)
    }

    pub fn label(self) -> String {
        format!("{}/{}", self.ordering.as_str(), self.handshake.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct StressParams {
    pub threads: usize,
    pub items_per_thread: usize,
    pub k: usize,
    /// Storage settings; block size, ordering, handshake and seed live here.
    pub config: StorageConfig,
    /// Chance that a pop follows each push while pushing.
    pub pop_ratio: f64,
    /// Give up waiting for missing items after this long without progress.
    pub stall_timeout: Duration,
    /// Yield the thread after this many pushes, so that workers interleave
    /// even when they outnumber cores. 0 disables.
    pub yield_every: usize,
}

impl StressParams {
    pub fn new(threads: usize, items_per_thread: usize, k: usize, block_size: usize) -> Self {
        StressParams {
            threads,
            items_per_thread,
            k,
            config: StorageConfig::default().with_block_size(block_size).with_audit(true),
            pop_ratio: 0.5,
            stall_timeout: Duration::from_secs(30),
            yield_every: 16,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.config = mode.apply(self.config);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config = self.config.with_seed(seed);
        self
    }

    pub fn with_chaos(mut self, chaos: bool) -> Self {
        self.config = self.config.with_chaos(chaos);
        self
    }
}

#[derive(Clone, Default)]
pub struct StressReport {
    pub pushed: u64,
    pub popped: u64,
    pub duplicates: u64,
    pub lost: u64,
    /// Items still poppable after quiescence.
    pub leftovers: u64,
    pub final_tail: usize,
    pub max_slot_spin: u64,
    pub blocks_allocated: usize,
    pub blocks_reused: u64,
    pub cleanups: u64,
    pub tail_regressions: u64,
    pub lifecycle_violations: u64,
    pub counters: PerformanceCounters,
    pub exactly_once: bool,
    pub fill: bool,
    pub lifecycle: bool,
    pub tail_monotone: bool,
    /// First failures, for diagnostics.
    pub failures: Vec<String>,
    /// Sorted popped payload tags.
    pub payloads: Vec<u64>,
    pub runtime: Duration,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.duplicates == 0 && self.lost == 0 && self.exactly_once && self.fill && self.lifecycle && self.tail_monotone
    }

    /// `Ok` if passed, otherwise an audit error carrying the failures.
    pub fn check(&self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Audit(format!(
                "pushed={} popped={} dup={} lost={} leftover={} flags(once={}, fill={}, lifecycle={}, tail={}): {}",
                self.pushed,
                self.popped,
                self.duplicates,
                self.lost,
                self.leftovers,
                self.exactly_once,
                self.fill,
                self.lifecycle,
                self.tail_monotone,
                self.failures.join("; ")
            )))
        }
    }
}

impl std::fmt::Debug for StressReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StressReport")
            .field("pushed", &self.pushed)
            .field("popped", &self.popped)
            .field("duplicates", &self.duplicates)
            .field("lost", &self.lost)
            .field("leftovers", &self.leftovers)
            .field("final_tail", &self.final_tail)
            .field("max_slot_spin", &self.max_slot_spin)
            .field("blocks_allocated", &self.blocks_allocated)
            .field("blocks_reused", &self.blocks_reused)
            .field("cleanups", &self.cleanups)
            .field("tail_regressions", &self.tail_regressions)
            .field("lifecycle_violations", &self.lifecycle_violations)
            .field("counters", &self.counters)
            .field("exactly_once", &self.exactly_once)
            .field("fill", &self.fill)
            .field("lifecycle", &self.lifecycle)
            .field("tail_monotone", &self.tail_monotone)
            .field("failures", &self.failures)
            .field("runtime", &self.runtime)
            .finish_non_exhaustive()
    }
}

/// Payload tag: thread in the high half, sequence number in the low half.
pub fn tag(thread: usize, seq: usize) -> u64 {
    ((thread as u64) << 32) | seq as u64
}

struct ThreadOutcome {
    popped: Vec<u64>,
    leftovers: u64,
    head: usize,
    scan: ScanStats,
    counters: PerformanceCounters,
}

fn drain_popped(place: &mut Place<u64>, popped: &mut Vec<u64>, global: &AtomicU64) -> bool {
    let mut any = false;
    while let Some(t) = place.pop() {
        popped.push(t);
        global.fetch_add(1, Ordering::Relaxed);
        any = true;
    }
    any
}

/// Every thread pushes uniquely tagged items, interleaving pops, then pops
/// until all items are accounted for; finally each place scans to the tail.
pub fn stress(params: &StressParams) -> Result<StressReport> {
    if params.threads == 0 || params.items_per_thread >= 1 << 32 {
        return Err(Error::Config("stress needs 1.. threads and < 2^32 items each".into()));
    }
    let start = Instant::now();
    let places = GlobalTaskStorage::<u64>::create(params.threads, params.config.clone())?;
    let storage = places[0].storage_handle();
    let total = (params.threads * params.items_per_thread) as u64;
    let popped_total = AtomicU64::new(0);
    let barrier = Barrier::new(params.threads);

    let outcomes: Vec<ThreadOutcome> = std::thread::scope(|s| {
        let handles: Vec<_> = places
            .into_iter()
            .map(|mut place| {
                let (popped_total, barrier) = (&popped_total, &barrier);
                s.spawn(move || {
                    let me = place.id();
                    let mut rng = stream_rng(params.config.seed, Stream::Workload, me as u64);
                    let mut popped = Vec::with_capacity(params.items_per_thread);
                    barrier.wait();
                    for seq in 0..params.items_per_thread {
                        let priority = rng.random_range(0..1024);
                        place.push(Strategy::new(priority, params.k), tag(me, seq));
                        if rng.random_bool(params.pop_ratio) {
                            if let Some(t) = place.pop() {
                                popped.push(t);
                                popped_total.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                        if params.yield_every > 0 && seq % params.yield_every == params.yield_every - 1 {
                            std::thread::yield_now();
                        }
                    }
                    let mut backoff = Backoff::new(6);
                    let mut last_progress = Instant::now();
                    while popped_total.load(Ordering::Relaxed) < total {
                        if drain_popped(&mut place, &mut popped, popped_total) {
                            backoff.reset();
                            last_progress = Instant::now();
                        } else if last_progress.elapsed() > params.stall_timeout {
                            break;
                        } else {
                            backoff.snooze();
                        }
                    }
                    barrier.wait();
                    // Tail is now final: scan to it and look for stragglers.
                    place.update_heap();
                    let mut leftovers = 0;
                    while let Some(t) = place.pop() {
                        popped.push(t);
                        leftovers += 1;
                    }
                    ThreadOutcome {
                        popped,
                        leftovers,
                        head: place.head(),
                        scan: place.scan_stats(),
                        counters: place.counters(),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stress worker panicked"))
            .collect()
    });

    let mut report = StressReport {
        pushed: total,
        final_tail: storage.observe_tail(),
        blocks_allocated: storage.blocks_allocated(),
        ..StressReport::default()
    };
    let mut payloads = Vec::with_capacity(total as usize);
    report.fill = true;
    for (id, o) in outcomes.into_iter().enumerate() {
        payloads.extend_from_slice(&o.popped);
        report.leftovers += o.leftovers;
        report.max_slot_spin = report.max_slot_spin.max(o.scan.max_slot_spin);
        report.tail_regressions += o.scan.tail_regressions;
        report.cleanups += o.scan.cleanups;
        report.counters.accumulate(&o.counters);
        if o.head != report.final_tail || o.scan.slots_scanned != report.final_tail as u64 {
            report.fill = false;
            report.failures.push(format!(
                "place {id}: head {} scanned {} but final tail {}",
                o.head, o.scan.slots_scanned, report.final_tail
            ));
        }
    }
    report.blocks_reused = report.counters.blocks_reused;
    payloads.sort_unstable();
    report.popped = payloads.len() as u64;
    report.duplicates = payloads.windows(2).filter(|w| w[0] == w[1]).count() as u64;
    let mut distinct = payloads.clone();
    distinct.dedup();
    let expected_present = distinct
        .iter()
        .filter(|&&t| ((t >> 32) as usize) < params.threads && ((t & 0xffff_ffff) as usize) < params.items_per_thread)
        .count() as u64;
    report.lost = total - expected_present;
    if report.lost > 0 {
        report.failures.push(format!("{} items never popped", report.lost));
    }
    if report.duplicates > 0 {
        report
            .failures
            .push(format!("{} payloads popped twice", report.duplicates));
    }
    report.exactly_once = report.duplicates == 0
        && report.lost == 0
        && report.leftovers == 0
        && expected_present == distinct.len() as u64;
    if report.leftovers > 0 {
        report
            .failures
            .push(format!("{} items popped only after quiescence", report.leftovers));
    }
    report.tail_monotone = report.tail_regressions == 0;

    let histories = storage.block_histories();
    report.lifecycle_violations = histories.iter().map(|h| h.violations).sum();
    match audit_histories(&histories, params.threads) {
        Ok(()) => report.lifecycle = true,
        Err(e) => report.failures.push(e),
    }
    report.payloads = payloads;
    report.runtime = start.elapsed();
    Ok(report)
}

/// Per-block lifecycle accounting at quiescence.
///
/// Every link is followed by at most one cleanup, which happens on the
/// `num_places`-th deregistration of that epoch. A block linked but not yet
/// cleaned has `num_places - active_threads` deregistrations pending.
pub fn audit_histories(histories: &[BlockHistory], num_places: usize) -> std::result::Result<(), String> {
    let p = num_places as u64;
    for (i, h) in histories.iter().enumerate() {
        if h.violations > 0 {
            return Err(format!("block {i}: {} relinks before cleanup ({h:?})", h.violations));
        }
        let expected_deregs = match h.links - h.cleanups.min(h.links) {
            0 if h.cleanups == h.links && !h.active => h.cleanups * p,
            1 if h.active => h.cleanups * p + (p - h.active_threads as u64),
            _ => return Err(format!("block {i}: links and cleanups out of step ({h:?})")),
        };
        if h.deregisters != expected_deregs {
            return Err(format!(
                "block {i}: {} deregistrations, expected {expected_deregs} ({h:?})",
                h.deregisters
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LifecycleParams {
    pub block_size: usize,
    pub threads: usize,
    /// Minimum number of completed block epochs (cleanups) to drive.
    pub epochs: u64,
    pub k: usize,
    pub mode: Mode,
    pub seed: u64,
}

impl LifecycleParams {
    pub fn new(block_size: usize, threads: usize, epochs: u64) -> Self {
        LifecycleParams {
            block_size,
            threads,
            epochs,
            k: 0,
            mode: Mode::RELAXED,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LifecycleReport {
    pub rounds: usize,
    pub cleanups: u64,
    pub links: u64,
    pub deregistrations: u64,
    pub blocks_allocated: usize,
    pub blocks_reused: u64,
    pub violations: u64,
    pub histories: Vec<BlockHistory>,
    pub audit: std::result::Result<(), String>,
    pub stress: StressReport,
}

impl LifecycleReport {
    /// One cleanup per epoch, reuse happened, and allocation stayed within
    /// `max_blocks`.
    pub fn passed(&self, epochs: u64, max_blocks: usize) -> bool {
        self.audit.is_ok()
            && self.violations == 0
            && self.cleanups >= epochs
            && self.blocks_reused > 0
            && self.blocks_allocated <= max_blocks
    }
}

/// Drives block epochs in lockstep rounds: every thread pushes one item,
/// then every thread drains what it can see. Rounds repeat until at least
/// `epochs` cleanups have happened.
pub fn lifecycle_audit(params: &LifecycleParams) -> Result<LifecycleReport> {
    if params.threads == 0 || params.block_size < 2 {
        return Err(Error::Config(
            "lifecycle audit needs threads >= 1 and block_size >= 2".into(),
        ));
    }
    let config = params.mode.apply(
        StorageConfig::default()
            .with_block_size(params.block_size)
            .with_seed(params.seed)
            .with_audit(true),
    );
    let places = GlobalTaskStorage::<u64>::create(params.threads, config)?;
    let storage = places[0].storage_handle();
    let barrier = Barrier::new(params.threads);
    let cleanups = AtomicU64::new(0);
    let done = std::sync::atomic::AtomicBool::new(false);
    // Each round moves the tail by at most `threads * (k + 1)` slots, so this
    // many rounds always suffice.
    let max_rounds = ((params.epochs as usize + 2) * params.block_size + 1) * (params.k + 1) + 16;

    let outcomes: Vec<(ThreadOutcome, usize)> = std::thread::scope(|s| {
        let handles: Vec<_> = places
            .into_iter()
            .map(|mut place| {
                let (barrier, cleanups, done) = (&barrier, &cleanups, &done);
                s.spawn(move || {
                    let me = place.id();
                    let mut popped = Vec::new();
                    let mut rounds = 0;
                    let mut counted = 0;
                    while rounds < max_rounds {
                        place.push(Strategy::new(0, params.k), tag(me, rounds));
                        barrier.wait();
                        while let Some(t) = place.pop() {
                            popped.push(t);
                        }
                        let c = place.scan_stats().cleanups;
                        cleanups.fetch_add(c - counted, Ordering::SeqCst);
                        counted = c;
                        rounds += 1;
                        barrier.wait();
                        if me == 0 && cleanups.load(Ordering::SeqCst) >= params.epochs {
                            done.store(true, Ordering::SeqCst);
                        }
                        barrier.wait();
                        if done.load(Ordering::SeqCst) {
                            break;
                        }
                    }
                    barrier.wait();
                    place.update_heap();
                    let mut leftovers = 0;
                    while let Some(t) = place.pop() {
                        popped.push(t);
                        leftovers += 1;
                    }
                    let outcome = ThreadOutcome {
                        popped,
                        leftovers,
                        head: place.head(),
                        scan: place.scan_stats(),
                        counters: place.counters(),
                    };
                    (outcome, rounds)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("lifecycle worker panicked"))
            .collect()
    });

    let rounds = outcomes[0].1;
    let histories = storage.block_histories();
    let mut stress = StressReport {
        pushed: (rounds * params.threads) as u64,
        final_tail: storage.observe_tail(),
        blocks_allocated: storage.blocks_allocated(),
        fill: true,
        ..StressReport::default()
    };
    let mut payloads = Vec::new();
    for (id, (o, _)) in outcomes.into_iter().enumerate() {
        payloads.extend(o.popped);
        stress.leftovers += o.leftovers;
        stress.counters.accumulate(&o.counters);
        stress.cleanups += o.scan.cleanups;
        stress.tail_regressions += o.scan.tail_regressions;
        stress.max_slot_spin = stress.max_slot_spin.max(o.scan.max_slot_spin);
        if o.head != stress.final_tail {
            stress.fill = false;
            stress
                .failures
                .push(format!("place {id}: head {} vs tail {}", o.head, stress.final_tail));
        }
    }
    payloads.sort_unstable();
    stress.popped = payloads.len() as u64;
    stress.duplicates = payloads.windows(2).filter(|w| w[0] == w[1]).count() as u64;
    payloads.dedup();
    stress.lost = stress.pushed - payloads.len() as u64;
    stress.exactly_once = stress.duplicates == 0 && stress.lost == 0 && stress.leftovers == 0;
    stress.tail_monotone = stress.tail_regressions == 0;
    stress.blocks_reused = stress.counters.blocks_reused;
    let audit = audit_histories(&histories, params.threads);
    stress.lifecycle = audit.is_ok();
    stress.payloads = payloads;

    Ok(LifecycleReport {
        rounds,
        cleanups: histories.iter().map(|h| h.cleanups).sum(),
        links: histories.iter().map(|h| h.links).sum(),
        deregistrations: histories.iter().map(|h| h.deregisters).sum(),
        blocks_allocated: storage.blocks_allocated(),
        blocks_reused: stress.blocks_reused,
        violations: histories.iter().map(|h| h.violations).sum(),
        histories,
        audit,
        stress,
    })
}

/// A seeded run whose functional output can be compared across modes.
#[derive(Clone, Debug)]
pub enum Scenario {
    Stress(StressParams),
    Sssp {
        graph: BenchGraph,
        k: usize,
        threads: usize,
        block_size: usize,
    },
    Gp {
        graph: BenchGraph,
        k: usize,
        threads: usize,
        block_size: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScenarioOutput {
    /// Sorted payload multiset.
    Payloads(Vec<u64>),
    Distances(Vec<u64>),
    Cut(u64),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Stress(_) => "stress",
            Scenario::Sssp { .. } => "sssp",
            Scenario::Gp { .. } => "gp",
        }
    }

    pub fn run(&self, mode: Mode) -> Result<ScenarioOutput> {
        match self {
            Scenario::Stress(params) => {
                let report = stress(&params.clone().with_mode(mode))?;
                report.check()?;
                Ok(ScenarioOutput::Payloads(report.payloads))
            }
            Scenario::Sssp {
                graph,
                k,
                threads,
                block_size,
            } => {
                let cfg = scheduler_config(mode, *block_size);
                Ok(ScenarioOutput::Distances(
                    sssp::parallel(graph, 0, *k, *threads, &cfg)?.dist,
                ))
            }
            Scenario::Gp {
                graph,
                k,
                threads,
                block_size,
            } => {
                let cfg = scheduler_config(mode, *block_size);
                Ok(ScenarioOutput::Cut(gp::parallel(graph, *threads, *k, &cfg)?.best))
            }
        }
    }
}

fn scheduler_config(mode: Mode, block_size: usize) -> SchedulerConfig {
    SchedulerConfig::from(mode.apply(StorageConfig::default().with_block_size(block_size)))
}

#[derive(Clone, Debug)]
pub struct Differential {
    pub left: (Mode, ScenarioOutput),
    pub right: (Mode, ScenarioOutput),
}

impl Differential {
    pub fn equal(&self) -> bool {
        self.left.1 == self.right.1
    }
}

/// Runs `scenario` under both modes and keeps both outputs.
pub fn differential(a: Mode, b: Mode, scenario: &Scenario) -> Result<Differential> {
    Ok(Differential {
        left: (a, scenario.run(a)?),
        right: (b, scenario.run(b)?),
    })
}

/// Outcome of [`explore_smallest`].
#[derive(Clone, Debug, Default)]
pub struct Exploration {
    pub reps: usize,
    pub failures: usize,
    pub max_slot_spin: u64,
    pub blocks_reused: u64,
    pub first_failure: Option<String>,
}

const SMALL_SHAPES: [(usize, f64); 4] = [(1, 0.0), (1, 1.0), (2, 0.0), (3, 0.0)];

/// Smallest-configuration stress with a random yield before atomic
/// accesses: 2 threads, block size 2, k ≤ 2, at most 6 pushes and pops in
/// the concurrent phase, followed by a drain and a full audit. Each
/// repetition draws its schedule shape from `seed + rep`.
pub fn explore_smallest(reps: usize, seed: u64) -> Exploration {
    let mut out = Exploration {
        reps,
        ..Exploration::default()
    };
    for rep in 0..reps {
        let rep_seed = seed.wrapping_add(rep as u64);
        let mut rng = stream_rng(rep_seed, Stream::Workload, u64::MAX);
        let k = rng.random_range(0..=2);
        // (pushes per thread, pop after each push): at most 6 operations.
        let (pushes, pop_ratio) = SMALL_SHAPES[rng.random_range(0..SMALL_SHAPES.len())];
        let mode = Mode::ALL[rng.random_range(0..Mode::ALL.len())];
        let mut params = StressParams::new(2, pushes, k, 2)
            .with_mode(mode)
            .with_seed(rep_seed)
            .with_chaos(true);
        params.stall_timeout = Duration::from_secs(10);
        params.pop_ratio = pop_ratio;
        match stress(&params) {
            Ok(report) => {
                out.max_slot_spin = out.max_slot_spin.max(report.max_slot_spin);
                out.blocks_reused += report.blocks_reused;
                if let Err(e) = report.check() {
                    out.failures += 1;
                    out.first_failure
                        .get_or_insert_with(|| format!("rep {rep} ({}, k={k}): {e}", mode.label()));
                }
            }
            Err(e) => {
                out.failures += 1;
                out.first_failure.get_or_insert_with(|| format!("rep {rep}: {e}"));
            }
        }
    }
    out
}
