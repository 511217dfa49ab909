//! A k-relaxed concurrent task storage.
//!
//! Tasks are published into a global array built from linked, recyclable
//! blocks. Each worker ("place") keeps a local priority heap of the tasks it
//! has seen and may miss up to `k` of the newest tasks, but every task is seen
//! by at least one worker. Every atomic access uses the weakest ordering that
//! keeps the required happens-before edges; a strict mode swaps in `SeqCst`
//! everywhere for differential testing.
//!
//! On top of the storage sit a small worker pool ([`scheduler`]), two
//! oracle-checked workloads ([`workloads`]), a CSV benchmark driver
//! ([`report`]) and executable audits of the storage's invariants
//! ([`conformance`]).

pub mod block;
pub mod config;
pub mod conformance;
pub mod error;
pub mod item;
pub mod place;
pub mod report;
mod rng;
pub mod scheduler;
pub mod storage;
mod sync;
pub mod workloads;

pub use block::{BlockHistory, DataBlock, RandomPicker, WindowPicker};
pub use config::{Handshake, OrderingMode, StorageConfig, DEFAULT_BLOCK_SIZE};
pub use conformance::{Mode, StressParams, StressReport};
pub use error::{Error, Result};
pub use item::{Strategy, TaskItem};
pub use place::{PerformanceCounters, Place, ScanStats, StrategyHeap};
pub use report::{BenchConfig, BenchKind, BenchReport, OrderingChoice};
pub use rng::GENERATOR_VERSION;
pub use scheduler::{run, Backoff, RunStats, SchedulerConfig, Spawner, Task};
pub use storage::GlobalTaskStorage;
pub use workloads::BenchGraph;
