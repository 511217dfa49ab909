//! Atomic primitives behind a single import point.
//!
//! Under `--cfg loom` the types come from loom so the interleaving tests in
//! `tests/loom.rs` drive the real storage code. Every atomic access in the
//! storage goes through [`Atomics`], which substitutes `SeqCst` in strict mode
//! and optionally injects yields for randomized-interleaving stress.

#[cfg(loom)]
pub(crate) use loom::sync::atomic::{fence, AtomicBool, AtomicI64, AtomicPtr, AtomicU64, AtomicUsize};
#[cfg(not(loom))]
pub(crate) use std::sync::atomic::{fence, AtomicBool, AtomicI64, AtomicPtr, AtomicU64, AtomicUsize};

pub(crate) use std::sync::atomic::Ordering;

use crate::config::OrderingMode;

/// Per-storage ordering policy, copied into every shared object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Atomics {
    strict: bool,
    chaos: bool,
}

impl Atomics {
    pub(crate) const RELAXED: Atomics = Atomics {
        strict: false,
        chaos: false,
    };

    pub(crate) fn new(mode: OrderingMode, chaos: bool) -> Self {
        Atomics {
            strict: mode == OrderingMode::Strict,
            chaos,
        }
    }

    #[inline(always)]
    pub(crate) fn ord(self, relaxed_mode: Ordering) -> Ordering {
        if self.strict {
            Ordering::SeqCst
        } else {
            relaxed_mode
        }
    }

    #[inline(always)]
    pub(crate) fn is_strict(self) -> bool {
        self.strict
    }

    /// Scheduling point before an atomic access.
    #[inline(always)]
    pub(crate) fn point(self) {
        if self.chaos {
            chaos::maybe_yield();
        }
    }
}

#[cfg(not(loom))]
mod chaos {
    use std::cell::Cell;

    thread_local! {
        static STATE: Cell<u64> = Cell::new(seed());
    }

    fn seed() -> u64 {
        use std::hash::{BuildHasher, RandomState};
        RandomState::new().hash_one(std::thread::current().id()) | 1
    }

    #[inline(never)]
    pub(super) fn maybe_yield() {
        let roll = STATE.with(|s| {
            // xorshift64
            let mut x = s.get();
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            s.set(x);
            x
        });
        if roll.is_multiple_of(4) {
            std::thread::yield_now();
        }
    }
}

#[cfg(loom)]
mod chaos {
    // loom already explores the schedule.
    pub(super) fn maybe_yield() {}
}

/// Interior-mutable payload cell; loom's version tracks access causality.
#[cfg(not(loom))]
pub(crate) struct PayloadCell<T>(std::cell::UnsafeCell<T>);

#[cfg(not(loom))]
impl<T> PayloadCell<T> {
    pub(crate) fn new(value: T) -> Self {
        PayloadCell(std::cell::UnsafeCell::new(value))
    }

    pub(crate) fn with_mut<R>(&self, f: impl FnOnce(*mut T) -> R) -> R {
        f(self.0.get())
    }

    pub(crate) fn get_mut(&mut self) -> &mut T {
        self.0.get_mut()
    }
}

#[cfg(loom)]
pub(crate) struct PayloadCell<T>(loom::cell::UnsafeCell<T>);

#[cfg(loom)]
impl<T> PayloadCell<T> {
    pub(crate) fn new(value: T) -> Self {
        PayloadCell(loom::cell::UnsafeCell::new(value))
    }

    pub(crate) fn with_mut<R>(&self, f: impl FnOnce(*mut T) -> R) -> R {
        self.0.with_mut(f)
    }

    pub(crate) fn get_mut(&mut self) -> &mut T {
        // SAFETY: &mut self guarantees exclusive access.
        self.0.with_mut(|p| unsafe { &mut *p })
    }
}

/// Cooperative wait used by spinning loops; required on single-core hosts.
#[inline]
pub(crate) fn relax() {
    #[cfg(loom)]
    loom::thread::yield_now();
    #[cfg(not(loom))]
    std::thread::yield_now();
}
