//! Task items and the position-based taken marking.
//!
//! An item is *taken* once `position != orig_position`. The only transition
//! is a single strong compare-exchange from `orig_position` to
//! `orig_position + 1`, so every publication of an item is consumed at most
//! once. All accesses to `position` are relaxed: a stale "not taken" read only
//! costs a wasted heap entry, and the CAS itself cannot be fooled.
//!
//! Fields other than `position` are logically immutable once the item is
//! reachable from a slot. They are still stored in relaxed atomics because
//! pooled items are re-initialized while lagging readers may touch them, and
//! block deregistration (relaxed by design) does not order those reads before
//! the re-initialization.

use std::fmt;

use crate::sync::{AtomicBool, AtomicI64, AtomicU64, AtomicUsize, Atomics, Ordering, PayloadCell};

/// Scheduling metadata: priority (higher runs first) and relaxation bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Strategy {
    pub priority: i64,
    pub k: usize,
}

impl Strategy {
    pub fn new(priority: i64, k: usize) -> Self {
        Strategy { priority, k }
    }
}

const UNASSIGNED: usize = usize::MAX;

pub struct TaskItem<T> {
    priority: AtomicI64,
    k: AtomicUsize,
    owner: AtomicUsize,
    orig_position: AtomicUsize,
    position: AtomicUsize,
    // Reuse generation, bumped on every init. Diagnostic only.
    epoch: AtomicU64,
    // Set by the taker once the payload has been moved out; the owner may
    // re-initialize the item only after observing it.
    consumed: AtomicBool,
    payload: PayloadCell<Option<T>>,
}

// SAFETY: the payload is written by the owner before publication (release on
// the slot CAS) and moved out exactly once by the winner of `try_take`, which
// then releases `consumed`. All other shared state is atomic.
unsafe impl<T: Send> Send for TaskItem<T> {}
unsafe impl<T: Send> Sync for TaskItem<T> {}

impl<T> Default for TaskItem<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> TaskItem<T> {
    pub fn new() -> Self {
        TaskItem {
            priority: AtomicI64::new(0),
            k: AtomicUsize::new(0),
            owner: AtomicUsize::new(UNASSIGNED),
            orig_position: AtomicUsize::new(UNASSIGNED),
            position: AtomicUsize::new(UNASSIGNED),
            epoch: AtomicU64::new(0),
            consumed: AtomicBool::new(false),
            payload: PayloadCell::new(None),
        }
    }

    /// Initializes an item the caller holds exclusively.
    pub fn init(&mut self, strategy: Strategy, payload: T, owner: usize) {
        *self.payload.get_mut() = Some(payload);
        self.store_metadata(strategy, owner);
    }

    /// Re-initializes a pooled item.
    ///
    /// # Safety
    /// The item must not be reachable from any live slot, and if it was ever
    /// published its payload must have been consumed (`is_consumed` observed
    /// true by this thread).
    pub(crate) unsafe fn reinit(&self, strategy: Strategy, payload: T, owner: usize) {
        self.payload.with_mut(|p| *p = Some(payload));
        self.store_metadata(strategy, owner);
    }

    fn store_metadata(&self, strategy: Strategy, owner: usize) {
        self.priority.store(strategy.priority, Ordering::Relaxed);
        self.k.store(strategy.k, Ordering::Relaxed);
        self.owner.store(owner, Ordering::Relaxed);
        self.orig_position.store(UNASSIGNED, Ordering::Relaxed);
        self.position.store(UNASSIGNED, Ordering::Relaxed);
        self.consumed.store(false, Ordering::Relaxed);
        self.epoch.fetch_add(1, Ordering::Relaxed);
    }

    /// Assigns the global index this item is about to be published at.
    /// Called by `put` right before its slot CAS.
    pub(crate) fn assign_position(&self, position: usize, a: Atomics) {
        self.orig_position.store(position, Ordering::Relaxed);
        a.point();
        self.position.store(position, a.ord(Ordering::Relaxed));
    }

    pub fn strategy(&self) -> Strategy {
        Strategy {
            priority: self.priority.load(Ordering::Relaxed),
            k: self.k.load(Ordering::Relaxed),
        }
    }

    pub fn owner(&self) -> usize {
        self.owner.load(Ordering::Relaxed)
    }

    pub fn orig_position(&self) -> usize {
        self.orig_position.load(Ordering::Relaxed)
    }

    pub fn position(&self) -> usize {
        self.position.load(Ordering::Relaxed)
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Relaxed)
    }

    /// Claims the item at its current `orig_position`.
    pub fn try_take(&self) -> bool {
        self.try_take_at(self.orig_position(), Atomics::RELAXED)
    }

    /// Claims the item if it is still the untaken publication at `orig`.
    ///
    /// Heap entries remember the index they were read from and pass it here,
    /// so an entry that outlived a recycle of its item can never claim the
    /// item's next publication.
    pub(crate) fn try_take_at(&self, orig: usize, a: Atomics) -> bool {
        a.point();
        // Strong: the caller tries exactly once per heap entry.
        self.position
            .compare_exchange(orig, orig + 1, a.ord(Ordering::Relaxed), a.ord(Ordering::Relaxed))
            .is_ok()
    }

    pub fn is_taken(&self) -> bool {
        self.is_taken_with(Atomics::RELAXED)
    }

    pub(crate) fn is_taken_with(&self, a: Atomics) -> bool {
        a.point();
        self.position.load(a.ord(Ordering::Relaxed)) != self.orig_position()
    }

    /// Moves the payload out after a successful take and marks the item
    /// consumed.
    ///
    /// # Safety
    /// The caller must have won `try_take_at` for the current publication and
    /// must have obtained the item through an acquire load of its slot (or be
    /// its owner).
    pub(crate) unsafe fn take_payload(&self) -> Option<T> {
        let payload = self.payload.with_mut(|p| (*p).take());
        self.consumed.store(true, Ordering::Release);
        payload
    }

    pub(crate) fn is_consumed(&self) -> bool {
        self.consumed.load(Ordering::Acquire)
    }
}

impl<T> fmt::Debug for TaskItem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskItem")
            .field("strategy", &self.strategy())
            .field("owner", &self.owner())
            .field("orig_position", &self.orig_position())
            .field("position", &self.position())
            .field("epoch", &self.epoch())
            .finish_non_exhaustive()
    }
}
