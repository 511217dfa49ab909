//! One segment of the global array.
//!
//! Ordering summary for the accesses in this module (relaxed mode):
//!
//! | access                                   | ordering             |
//! |------------------------------------------|----------------------|
//! | slot probe load in `put`                 | relaxed              |
//! | slot CAS in `put` (strong)               | release / relaxed    |
//! | `next` CAS in `add_block` (weak, looped) | release / relaxed    |
//! | `next` load in `add_block`               | relaxed              |
//! | `next` loads by walkers (see `place`)    | acquire              |
//! | `active` load in `add_block`             | acquire (handshake)  |
//! | `active` store-true / loser store-false  | relaxed              |
//! | `active` store-false in `deregister`     | release              |
//! | `active` load in `is_reusable`           | relaxed (+ acquire fence in the fenced variant) |
//! | `active_threads` store / `fetch_sub`     | relaxed              |
//!
//! Strict mode replaces all of these with `SeqCst` and adds a `SeqCst` fence
//! between the `next` reset and the `active` store in `deregister`.

use std::ptr;
use std::sync::atomic::{AtomicBool as ShadowBool, AtomicU64 as ShadowU64, Ordering::SeqCst};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::Handshake;
use crate::item::TaskItem;
use crate::sync::{fence, AtomicBool, AtomicPtr, AtomicU64, AtomicUsize, Atomics, Ordering};

/// Chooses where the probe sequence starts inside a window of `cur_k + 1`
/// slots. Implementations must return a value in `[0, cur_k]`.
pub trait WindowPicker {
    fn pick(&mut self, cur_k: usize) -> usize;
}

impl<F: FnMut(usize) -> usize> WindowPicker for F {
    fn pick(&mut self, cur_k: usize) -> usize {
        self(cur_k)
    }
}

/// Uniform picker backed by a seeded ChaCha stream.
#[derive(Clone, Debug)]
pub struct RandomPicker(ChaCha8Rng);

impl RandomPicker {
    pub fn new(rng: ChaCha8Rng) -> Self {
        RandomPicker(rng)
    }
}

impl WindowPicker for RandomPicker {
    #[inline]
    fn pick(&mut self, cur_k: usize) -> usize {
        if cur_k == 0 {
            0
        } else {
            self.0.random_range(0..=cur_k)
        }
    }
}

/// Lifecycle bookkeeping kept outside the algorithm's memory orderings.
#[derive(Debug, Default)]
pub(crate) struct Shadow {
    pub(crate) links: ShadowU64,
    pub(crate) cleanups: ShadowU64,
    pub(crate) deregisters: ShadowU64,
    pub(crate) violations: ShadowU64,
    // Set when the owner saw the block reusable; consumed by add_block.
    pub(crate) vetted: ShadowBool,
}

/// Snapshot of one block's shadow counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockHistory {
    pub links: u64,
    pub cleanups: u64,
    pub deregisters: u64,
    pub violations: u64,
    pub active: bool,
    pub active_threads: usize,
}

pub struct DataBlock<T> {
    slots: Box<[AtomicPtr<TaskItem<T>>]>,
    offset: AtomicUsize,
    next: AtomicPtr<DataBlock<T>>,
    active_threads: AtomicUsize,
    active: AtomicBool,
    // Completed cleanups; the item pools use it to tell when a housing block
    // can no longer be read.
    epoch: AtomicU64,
    owner: usize,
    atomics: Atomics,
    audit: bool,
    shadow: Shadow,
}

// SAFETY: all shared state is atomic; raw pointers are only dereferenced
// under the storage's publication protocol.
unsafe impl<T: Send> Send for DataBlock<T> {}
unsafe impl<T: Send> Sync for DataBlock<T> {}

impl<T> DataBlock<T> {
    pub(crate) fn new(block_size: usize, owner: usize, atomics: Atomics, audit: bool) -> Self {
        DataBlock {
            slots: (0..block_size).map(|_| AtomicPtr::new(ptr::null_mut())).collect(),
            offset: AtomicUsize::new(0),
            next: AtomicPtr::new(ptr::null_mut()),
            active_threads: AtomicUsize::new(0),
            active: AtomicBool::new(false),
            epoch: AtomicU64::new(0),
            owner,
            atomics,
            audit,
            shadow: Shadow::default(),
        }
    }

    /// Standalone block for experiments and tests.
    pub fn detached(block_size: usize) -> Self {
        Self::new(block_size, 0, Atomics::RELAXED, true)
    }

    /// Marks a block as the pre-linked head of a fresh storage.
    pub(crate) fn activate_as_start(&self, num_places: usize) {
        self.offset.store(0, Ordering::Relaxed);
        self.active_threads.store(num_places, Ordering::Relaxed);
        self.active.store(true, Ordering::Relaxed);
        if self.audit {
            self.shadow.links.store(1, SeqCst);
        }
    }

    pub fn block_size(&self) -> usize {
        self.slots.len()
    }

    pub fn offset(&self) -> usize {
        self.offset.load(Ordering::Relaxed)
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        !self.slots[index].load(Ordering::Relaxed).is_null()
    }

    /// Item stored at `index`, or null. Acquire: pairs with the release CAS
    /// in `put` so the item's fields are visible to the reader.
    #[inline]
    pub(crate) fn load_slot(&self, index: usize) -> *const TaskItem<T> {
        let a = self.atomics;
        a.point();
        self.slots[index].load(a.ord(Ordering::Acquire))
    }

    /// Successor link, acquire.
    #[inline]
    pub(crate) fn load_next(&self) -> *const DataBlock<T> {
        let a = self.atomics;
        a.point();
        self.next.load(a.ord(Ordering::Acquire))
    }

    pub fn has_next(&self) -> bool {
        !self.next.load(Ordering::Relaxed).is_null()
    }

    pub fn is_active(&self) -> bool {
        self.active.load(Ordering::Relaxed)
    }

    pub fn active_threads(&self) -> usize {
        self.active_threads.load(Ordering::Relaxed)
    }

    /// Publishes `item` at the first free slot of a `k`-window starting at
    /// `cur_tail`, moving to later windows when one is full.
    ///
    /// Returns `false` once `cur_tail` leaves the block; `cur_tail` then holds
    /// the first index past this block. On success `cur_tail` is the base of
    /// the window the item landed in.
    ///
    /// # Safety
    /// `item` must stay allocated for as long as any slot may reference it,
    /// and `cur_tail >= self.offset()`.
    pub unsafe fn put(
        &self,
        cur_tail: &mut usize,
        item: &TaskItem<T>,
        tests: usize,
        picker: &mut impl WindowPicker,
        probe_failures: &mut u64,
    ) -> bool {
        let a = self.atomics;
        let block_size = self.slots.len();
        let k = item.strategy().k;
        let offset = self.offset();
        debug_assert!(
            *cur_tail >= offset,
            "cur_tail {} before block offset {}",
            cur_tail,
            offset
        );
        let item_ptr = item as *const TaskItem<T> as *mut TaskItem<T>;
        let mut array_offset = *cur_tail - offset;
        while array_offset < block_size {
            let cur_k = k.min(block_size - array_offset - 1);
            let to_add = picker.pick(cur_k);
            debug_assert!(to_add <= cur_k);
            let i_limit = to_add + tests.min(cur_k + 1);
            for i in to_add..i_limit {
                let wrapped_i = i % (cur_k + 1);
                let elem = &self.slots[array_offset + wrapped_i];
                a.point();
                if elem.load(a.ord(Ordering::Relaxed)).is_null() {
                    item.assign_position(*cur_tail + wrapped_i, a);
                    a.point();
                    // Strong: a spurious failure would leave an empty slot
                    // behind a tail that is about to move past it.
                    if elem
                        .compare_exchange(
                            ptr::null_mut(),
                            item_ptr,
                            a.ord(Ordering::Release),
                            a.ord(Ordering::Relaxed),
                        )
                        .is_ok()
                    {
                        return true;
                    }
                }
                *probe_failures += 1;
            }
            *cur_tail += cur_k + 1;
            array_offset = *cur_tail - offset;
        }
        false
    }

    /// Links `block` behind `self`. Returns `false` if another thread linked
    /// a successor first; `block` is then inactive again.
    ///
    /// # Safety
    /// Caller owns `block`, saw it reusable, and `block` outlives every
    /// traversal of the list.
    pub unsafe fn add_block(&self, block: &DataBlock<T>, num_places: usize, handshake: Handshake) -> bool {
        let a = self.atomics;
        if handshake == Handshake::Acquire {
            // Value ignored; only the synchronize-with edge to the releasing
            // store in `deregister` matters.
            a.point();
            let _ = block.active.load(a.ord(Ordering::Acquire));
        }
        let vetted = block.shadow.vetted.swap(false, SeqCst);
        debug_assert!(vetted, "add_block on a block not vetted by is_reusable");
        if block.audit {
            block.audit_before_link(vetted);
        }
        a.point();
        block.active_threads.store(num_places, a.ord(Ordering::Relaxed));
        a.point();
        block.active.store(true, a.ord(Ordering::Relaxed));

        let pred = self;
        block.offset.store(pred.offset() + block.slots.len(), Ordering::Relaxed);
        let block_ptr = block as *const DataBlock<T> as *mut DataBlock<T>;
        a.point();
        let mut next_block = pred.next.load(a.ord(Ordering::Relaxed));
        while next_block.is_null() {
            a.point();
            match pred.next.compare_exchange_weak(
                ptr::null_mut(),
                block_ptr,
                a.ord(Ordering::Release),
                a.ord(Ordering::Relaxed),
            ) {
                Ok(_) => {
                    if block.audit {
                        block.shadow.links.fetch_add(1, SeqCst);
                    }
                    return true;
                }
                Err(current) => next_block = current,
            }
        }
        // Someone else linked a successor; make ours reusable again.
        a.point();
        block.active.store(false, a.ord(Ordering::Relaxed));
        false
    }

    fn audit_before_link(&self, vetted: bool) {
        let links = self.shadow.links.load(SeqCst);
        let cleanups = self.shadow.cleanups.load(SeqCst);
        let stale_slots = self.slots.iter().any(|s| !s.load(Ordering::Relaxed).is_null());
        if !vetted || links != cleanups || stale_slots || !self.next.load(Ordering::Relaxed).is_null() {
            self.shadow.violations.fetch_add(1, SeqCst);
        }
    }

    /// Drops this place's reference to the block. The last place out clears
    /// the block and marks it reusable. Returns whether this call cleaned up.
    pub fn deregister(&self) -> bool {
        let a = self.atomics;
        if self.audit {
            self.shadow.deregisters.fetch_add(1, SeqCst);
        }
        a.point();
        let old = self.active_threads.fetch_sub(1, a.ord(Ordering::Relaxed));
        debug_assert!(old >= 1, "deregister on a block nobody holds");
        if old == 1 {
            // cleanup: items stay in their owners' pools; the epoch bump lets
            // the owners recycle them.
            for slot in self.slots.iter() {
                a.point();
                slot.store(ptr::null_mut(), a.ord(Ordering::Relaxed));
            }
            self.epoch.fetch_add(1, Ordering::Release);
            if self.audit {
                self.shadow.cleanups.fetch_add(1, SeqCst);
            }
            a.point();
            self.next.store(ptr::null_mut(), a.ord(Ordering::Relaxed));
            if a.is_strict() {
                fence(Ordering::SeqCst);
            }
            a.point();
            self.active.store(false, a.ord(Ordering::Release));
            true
        } else {
            false
        }
    }

    /// Owner-only check whether the block can be relinked.
    pub fn is_reusable(&self) -> bool {
        let a = self.atomics;
        a.point();
        let result = !self.active.load(a.ord(Ordering::Relaxed));
        if result {
            self.shadow.vetted.store(true, SeqCst);
        }
        result
    }

    /// As [`is_reusable`](Self::is_reusable), but synchronizes with the last
    /// cleanup through an acquire fence when the block is free.
    pub fn is_reusable_fenced(&self) -> bool {
        let a = self.atomics;
        a.point();
        let result = !self.active.load(a.ord(Ordering::Relaxed));
        if result {
            fence(a.ord(Ordering::Acquire));
            self.shadow.vetted.store(true, SeqCst);
        }
        result
    }

    pub fn history(&self) -> BlockHistory {
        BlockHistory {
            links: self.shadow.links.load(SeqCst),
            cleanups: self.shadow.cleanups.load(SeqCst),
            deregisters: self.shadow.deregisters.load(SeqCst),
            violations: self.shadow.violations.load(SeqCst),
            active: self.is_active(),
            active_threads: self.active_threads(),
        }
    }
}
