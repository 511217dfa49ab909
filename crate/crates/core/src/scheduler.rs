//! A small worker pool on top of the storage.
//!
//! Each worker owns one place and loops pop → execute. Executing a task may
//! spawn more tasks into the same place. The run ends when the count of
//! pushed-but-unfinished tasks drops to zero.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use crate::config::StorageConfig;
use crate::error::{Error, Result};
use crate::item::Strategy;
use crate::place::{PerformanceCounters, Place};
use crate::storage::GlobalTaskStorage;

#[derive(Clone, Debug)]
pub struct Task<T> {
    pub strategy: Strategy,
    pub payload: T,
}

impl<T> Task<T> {
    pub fn new(strategy: Strategy, payload: T) -> Self {
        Task { strategy, payload }
    }
}

#[derive(Clone, Debug)]
pub struct SchedulerConfig {
    pub storage: StorageConfig,
    /// Abort if no worker finishes a task for this long while work remains.
    pub stall_timeout: Duration,
    /// Largest backoff exponent an idle worker reaches.
    pub backoff_cap: u32,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            storage: StorageConfig::default(),
            stall_timeout: Duration::from_secs(60),
            backoff_cap: 6,
        }
    }
}

impl From<StorageConfig> for SchedulerConfig {
    fn from(storage: StorageConfig) -> Self {
        SchedulerConfig {
            storage,
            ..SchedulerConfig::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunStats {
    pub wall_time: Duration,
    pub per_place: Vec<PerformanceCounters>,
    pub executed: u64,
    pub pushed: u64,
}

impl RunStats {
    pub fn totals(&self) -> PerformanceCounters {
        let mut total = PerformanceCounters::default();
        for c in &self.per_place {
            total.accumulate(c);
        }
        total
    }
}

/// Exponential spin-then-yield backoff for idle workers.
#[derive(Clone, Debug)]
pub struct Backoff {
    step: u32,
    cap: u32,
}

impl Backoff {
    pub fn new(cap: u32) -> Self {
        Backoff { step: 0, cap }
    }

    pub fn reset(&mut self) {
        self.step = 0;
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn snooze(&mut self) {
        for _ in 0..(1u32 << self.step) {
            std::hint::spin_loop();
        }
        std::thread::yield_now();
        if self.step < self.cap {
            self.step += 1;
        }
    }
}

#[repr(align(128))]
#[derive(Default)]
struct Padded(AtomicU64);

struct Shared {
    outstanding: AtomicUsize,
    abort: AtomicBool,
    // Tasks finished per worker, for the stall watchdog.
    finished: Vec<Padded>,
}

impl Shared {
    fn total_finished(&self) -> u64 {
        self.finished.iter().map(|p| p.0.load(Ordering::Relaxed)).sum()
    }
}

/// Handle passed to executing tasks for spawning follow-up work.
pub struct Spawner<'a, T> {
    place: &'a mut Place<T>,
    shared: &'a Shared,
    pushed: u64,
}

impl<T: Send> Spawner<'_, T> {
    pub fn spawn(&mut self, strategy: Strategy, payload: T) {
        // Counted before publication so no worker can see zero while this
        // task exists.
        self.shared.outstanding.fetch_add(1, Ordering::Relaxed);
        self.pushed += 1;
        self.place.push(strategy, payload);
    }

    pub fn place_id(&self) -> usize {
        self.place.id()
    }
}

struct WorkerReport {
    counters: PerformanceCounters,
    executed: u64,
    pushed: u64,
}

/// Runs `roots` and everything they spawn on `num_threads` workers.
pub fn run<T, F>(num_threads: usize, roots: Vec<Task<T>>, config: &SchedulerConfig, execute: F) -> Result<RunStats>
where
    T: Send,
    F: Fn(T, &mut Spawner<'_, T>) + Sync,
{
    if num_threads == 0 {
        return Err(Error::Config("need at least one worker thread".into()));
    }
    let places = GlobalTaskStorage::<T>::create(num_threads, config.storage.clone())?;
    let shared = Shared {
        outstanding: AtomicUsize::new(0),
        abort: AtomicBool::new(false),
        finished: (0..num_threads).map(|_| Padded::default()).collect(),
    };
    let barrier = Barrier::new(num_threads);
    let start = Instant::now();
    let mut roots = Some(roots);

    let reports: Vec<Result<WorkerReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = places
            .into_iter()
            .map(|mut place| {
                let roots = if place.id() == 0 { roots.take() } else { None };
                let (shared, barrier, execute) = (&shared, &barrier, &execute);
                s.spawn(move || {
                    let mut pushed = 0;
                    if let Some(roots) = roots {
                        shared.outstanding.fetch_add(roots.len(), Ordering::Relaxed);
                        for task in roots {
                            place.push(task.strategy, task.payload);
                            pushed += 1;
                        }
                    }
                    barrier.wait();
                    let result = worker_loop(&mut place, shared, config, execute);
                    if result.is_err() {
                        shared.abort.store(true, Ordering::Release);
                    }
                    result.map(|mut report| {
                        report.pushed += pushed;
                        report
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let wall_time = start.elapsed();

    let mut stats = RunStats {
        wall_time,
        per_place: Vec::with_capacity(num_threads),
        executed: 0,
        pushed: 0,
    };
    for report in reports {
        let report = report?;
        stats.per_place.push(report.counters);
        stats.executed += report.executed;
        stats.pushed += report.pushed;
    }
    if stats.executed != stats.pushed {
        return Err(Error::Leftover(format!(
            "executed {} of {} pushed tasks",
            stats.executed, stats.pushed
        )));
    }
    Ok(stats)
}

/// Pops and executes until global termination (or an abort) is observed.
fn worker_loop<T, F>(
    place: &mut Place<T>,
    shared: &Shared,
    config: &SchedulerConfig,
    execute: &F,
) -> Result<WorkerReport>
where
    T: Send,
    F: Fn(T, &mut Spawner<'_, T>) + Sync,
{
    let me = place.id();
    let mut executed = 0u64;
    let mut pushed = 0u64;
    let mut backoff = Backoff::new(config.backoff_cap);
    let mut idle_since: Option<(Instant, u64)> = None;
    loop {
        if shared.abort.load(Ordering::Acquire) {
            break;
        }
        if let Some(payload) = place.pop() {
            backoff.reset();
            idle_since = None;
            let mut spawner = Spawner {
                place: &mut *place,
                shared,
                pushed: 0,
            };
            execute(payload, &mut spawner);
            pushed += spawner.pushed;
            executed += 1;
            shared.finished[me].0.store(executed, Ordering::Relaxed);
            shared.outstanding.fetch_sub(1, Ordering::Release);
            continue;
        }
        if shared.outstanding.load(Ordering::Acquire) == 0 {
            break;
        }
        let finished = shared.total_finished();
        match idle_since {
            Some((since, seen)) if seen == finished => {
                if since.elapsed() >= config.stall_timeout {
                    shared.abort.store(true, Ordering::Release);
                    return Err(Error::Stalled(format!(
                        "no task finished for {:?}; outstanding={} tail={} finished={} place={:?}",
                        config.stall_timeout,
                        shared.outstanding.load(Ordering::Relaxed),
                        place.storage().observe_tail(),
                        finished,
                        place
                    )));
                }
            }
            _ => idle_since = Some((Instant::now(), finished)),
        }
        backoff.snooze();
    }
    if !shared.abort.load(Ordering::Acquire) && place.pop().is_some() {
        return Err(Error::Leftover(format!("place {me} still had a task at termination")));
    }
    Ok(WorkerReport {
        counters: place.counters(),
        executed,
        pushed,
    })
}

#[cfg(all(test, not(loom)))]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn config() -> SchedulerConfig {
        SchedulerConfig::from(StorageConfig::default().with_block_size(16))
    }

    #[test]
    fn zero_roots_terminate_immediately() {
        let stats = run::<u32, _>(3, Vec::new(), &config(), |_, _| unreachable!()).unwrap();
        assert_eq!(stats.executed, 0);
        assert_eq!(stats.pushed, 0);
    }

    #[test]
    fn chain_runs_every_task_once_on_one_thread() {
        let seen = Mutex::new(Vec::new());
        let roots = vec![Task::new(Strategy::new(0, 2), 0u32)];
        let stats = run(1, roots, &config(), |n, sp| {
            seen.lock().unwrap().push(n);
            if n + 1 < 100 {
                sp.spawn(Strategy::new(0, 2), n + 1);
            }
        })
        .unwrap();
        assert_eq!(stats.executed, 100);
        assert_eq!(seen.into_inner().unwrap(), (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn diamond_dag_counts_match() {
        // Binary spawn tree of depth 13 (16383 tasks); each task is a node id.
        let executed = AtomicU64::new(0);
        let roots = vec![Task::new(Strategy::new(0, 8), 1u32)];
        let stats = run(4, roots, &config(), |node, sp| {
            executed.fetch_add(1, Ordering::Relaxed);
            if node < (1 << 13) {
                sp.spawn(Strategy::new(node as i64, 8), node * 2);
                sp.spawn(Strategy::new(node as i64, 8), node * 2 + 1);
            }
        })
        .unwrap();
        assert_eq!(stats.executed, (1 << 14) - 1);
        assert_eq!(stats.executed, stats.pushed);
        assert_eq!(executed.into_inner(), stats.executed);
        assert_eq!(stats.totals().pops, stats.executed);
    }

    #[test]
    fn idle_worker_resumes_when_work_arrives() {
        // Worker 0 holds the only root and spawns late; others idle first.
        let roots = vec![Task::new(Strategy::new(0, 0), 0u32)];
        let stats = run(2, roots, &config(), |n, sp| {
            if n == 0 {
                std::thread::sleep(Duration::from_millis(20));
                for i in 1..50 {
                    sp.spawn(Strategy::new(0, 0), i);
                }
            }
        })
        .unwrap();
        assert_eq!(stats.executed, 50);
    }

    #[test]
    fn backoff_respects_cap() {
        let mut b = Backoff::new(3);
        for _ in 0..20 {
            b.snooze();
            assert!(b.step() <= 3);
        }
        assert_eq!(b.step(), 3);
        b.reset();
        assert_eq!(b.step(), 0);
    }

    #[test]
    fn zero_threads_is_rejected() {
        assert!(run::<u32, _>(0, Vec::new(), &config(), |_, _| {}).is_err());
    }
}
