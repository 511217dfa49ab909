//! Per-thread access point to the storage.
//!
//! A place owns its local head into the global array, a priority heap of the
//! items it has seen, and pools of the items and blocks it allocated. Nothing
//! in here is shared; cross-thread traffic goes through the tail, the block
//! slots and links, and item positions.

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::block::{DataBlock, RandomPicker};
use crate::config::Handshake;
use crate::item::{Strategy, TaskItem};
use crate::rng::{stream_rng, Stream};
use crate::storage::GlobalTaskStorage;
use crate::sync::{relax, Atomics};

/// Per-place tallies, read after a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PerformanceCounters {
    pub pushes: u64,
    pub pops: u64,
    pub pop_empties: u64,
    pub slot_probe_failures: u64,
    pub blocks_linked: u64,
    pub blocks_reused: u64,
    pub heap_discards: u64,
}

impl PerformanceCounters {
    pub fn accumulate(&mut self, other: &PerformanceCounters) {
        self.pushes += other.pushes;
        self.pops += other.pops;
        self.pop_empties += other.pop_empties;
        self.slot_probe_failures += other.slot_probe_failures;
        self.blocks_linked += other.blocks_linked;
        self.blocks_reused += other.blocks_reused;
        self.heap_discards += other.heap_discards;
    }
}

/// Observations made while scanning the global array, used by audits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    /// Global indices this place has read from a slot.
    pub slots_scanned: u64,
    /// Longest run of empty reloads of a slot below the tail.
    pub max_slot_spin: u64,
    /// Times an acquired tail was smaller than a previously acquired one.
    pub tail_regressions: u64,
    pub deregistrations: u64,
    pub cleanups: u64,
}

struct HeapEntry<T> {
    priority: i64,
    // Global index the item was read from; the expected value for the take.
    orig: usize,
    item: *const TaskItem<T>,
}

impl<T> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}

impl<T> Eq for HeapEntry<T> {}

impl<T> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        // Higher priority first; among equals, older positions first.
        self.priority
            .cmp(&other.priority)
            .then_with(|| other.orig.cmp(&self.orig))
    }
}

/// Local max-heap over item handles. Taken items are dropped lazily on pop.
pub struct StrategyHeap<T> {
    entries: BinaryHeap<HeapEntry<T>>,
}

impl<T> StrategyHeap<T> {
    fn new() -> Self {
        StrategyHeap {
            entries: BinaryHeap::new(),
        }
    }

    fn push(&mut self, priority: i64, orig: usize, item: *const TaskItem<T>) {
        self.entries.push(HeapEntry { priority, orig, item });
    }

    fn pop(&mut self) -> Option<HeapEntry<T>> {
        self.entries.pop()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

struct Published<T> {
    item: *const TaskItem<T>,
    block: *const DataBlock<T>,
    block_epoch: u64,
}

// How many of the oldest published items `acquire_item` inspects.
const ITEM_SCAN: usize = 8;

struct ItemPool<T> {
    owned: Vec<Box<TaskItem<T>>>,
    published: VecDeque<Published<T>>,
}

impl<T> ItemPool<T> {
    /// An item is reusable once its payload was consumed and the block that
    /// housed it has been cleaned, so no slot can lead a reader back to it.
    fn take_reusable(&mut self) -> Option<*const TaskItem<T>> {
        let limit = self.published.len().min(ITEM_SCAN);
        let found = (0..limit).find(|&i| {
            let p = &self.published[i];
            // SAFETY: items and blocks live until the storage drops.
            unsafe { (*p.item).is_consumed() && (*p.block).epoch() != p.block_epoch }
        })?;
        self.published.remove(found).map(|p| p.item)
    }
}

pub struct Place<T> {
    id: usize,
    storage: Arc<GlobalTaskStorage<T>>,
    atomics: Atomics,
    block_size: usize,
    tests: usize,
    num_places: usize,
    handshake: Handshake,
    spin_cap: u64,

    head: usize,
    head_block: *const DataBlock<T>,
    tail_block: *const DataBlock<T>,
    tail_block_offset: usize,

    heap: StrategyHeap<T>,
    items: ItemPool<T>,
    blocks: Vec<*const DataBlock<T>>,
    block_cursor: usize,
    picker: RandomPicker,

    counters: PerformanceCounters,
    scan: ScanStats,
    last_tail: usize,
}

// SAFETY: a place is used by one thread at a time; the raw pointers refer to
// storage-owned objects whose shared state is atomic.
unsafe impl<T: Send> Send for Place<T> {}

impl<T: Send> Place<T> {
    pub(crate) fn new(id: usize, storage: Arc<GlobalTaskStorage<T>>, start: *const DataBlock<T>) -> Self {
        let config = storage.config().clone();
        Place {
            id,
            atomics: storage.atomics(),
            block_size: config.block_size,
            tests: config.effective_tests(),
            num_places: storage.num_places(),
            handshake: config.handshake,
            spin_cap: config.spin_cap,
            head: 0,
            head_block: start,
            tail_block: start,
            tail_block_offset: 0,
            heap: StrategyHeap::new(),
            items: ItemPool {
                owned: Vec::new(),
                published: VecDeque::new(),
            },
            // The start block belongs to place 0.
            blocks: if id == 0 { vec![start] } else { Vec::new() },
            block_cursor: 0,
            picker: RandomPicker::new(stream_rng(config.seed, Stream::Put, id as u64)),
            counters: PerformanceCounters::default(),
            scan: ScanStats::default(),
            last_tail: 0,
            storage,
        }
    }

    /// Publishes a task. It becomes visible to other places once the tail
    /// passes its window; this place sees it immediately.
    pub fn push(&mut self, strategy: Strategy, payload: T) {
        let item_ptr = self.acquire_item(strategy, payload);
        // SAFETY: pool items live until the storage drops.
        let item = unsafe { &*item_ptr };
        self.counters.pushes += 1;

        // A cached tail block behind our head block may already be recycled.
        let head_offset = self.head_block().offset();
        if self.tail_block_offset < head_offset {
            self.tail_block = self.head_block;
            self.tail_block_offset = head_offset;
        }

        let mut cur_tail = self.storage.load_tail_relaxed();
        let mut block_ptr = self.tail_block;
        loop {
            // SAFETY: blocks at or after our head block are still registered
            // by this place and therefore not recycled.
            let block = unsafe { &*block_ptr };
            if cur_tail >= block.offset() + self.block_size {
                block_ptr = self.successor(block);
                continue;
            }
            // SAFETY: the item stays allocated for the storage's lifetime.
            let placed = unsafe {
                block.put(
                    &mut cur_tail,
                    item,
                    self.tests,
                    &mut self.picker,
                    &mut self.counters.slot_probe_failures,
                )
            };
            if placed {
                break;
            }
            block_ptr = self.successor(block);
        }

        // SAFETY: as above.
        let block = unsafe { &*block_ptr };
        self.tail_block = block_ptr;
        self.tail_block_offset = block.offset();
        self.storage.advance_tail(cur_tail);

        self.items.published.push_back(Published {
            item: item_ptr,
            block: block_ptr,
            block_epoch: block.epoch(),
        });
        self.heap.push(strategy.priority, item.orig_position(), item_ptr);
    }

    /// Takes the highest-priority task visible to this place.
    ///
    /// `None` means nothing is visible right now, not that the storage is
    /// globally empty.
    pub fn pop(&mut self) -> Option<T> {
        self.update_heap();
        let mut refreshed = false;
        loop {
            match self.heap.pop() {
                Some(entry) => {
                    // SAFETY: pool items live until the storage drops.
                    let item = unsafe { &*entry.item };
                    if item.try_take_at(entry.orig, self.atomics) {
                        self.counters.pops += 1;
                        // SAFETY: we won the take for the publication we read
                        // through an acquire slot load (or pushed ourselves).
                        let payload = unsafe { item.take_payload() };
                        return Some(payload.expect("taken item without payload"));
                    }
                    self.counters.heap_discards += 1;
                }
                None if refreshed => {
                    self.counters.pop_empties += 1;
                    return None;
                }
                None => {
                    refreshed = true;
                    self.update_heap();
                }
            }
        }
    }

    /// Reads every slot between the local head and the acquired tail, adding
    /// untaken foreign items to the heap.
    pub fn update_heap(&mut self) {
        let tail = self.storage.observe_tail();
        if tail < self.last_tail {
            self.scan.tail_regressions += 1;
        }
        self.last_tail = self.last_tail.max(tail);

        while self.head < tail {
            if self.head >= self.head_block().offset() + self.block_size {
                self.deregister_old_blocks();
                continue;
            }
            let block = self.head_block();
            let index = self.head - block.offset();
            let mut spins = 0u64;
            let item_ptr = loop {
                let p = block.load_slot(index);
                if !p.is_null() {
                    break p;
                }
                spins += 1;
                debug_assert!(
                    spins <= self.spin_cap,
                    "slot {} below tail {} stayed empty (place {})",
                    self.head,
                    tail,
                    self.id
                );
                relax();
            };
            self.scan.max_slot_spin = self.scan.max_slot_spin.max(spins);
            self.scan.slots_scanned += 1;
            // SAFETY: the acquire slot load makes the item's initialization
            // visible, and its housing block is still registered by us.
            let item = unsafe { &*item_ptr };
            if !item.is_taken_with(self.atomics) && item.owner() != self.id {
                self.heap.push(item.strategy().priority, self.head, item_ptr);
            }
            self.head += 1;
        }
    }

    /// Releases every block that lies entirely behind the local head.
    fn deregister_old_blocks(&mut self) {
        while self.head >= self.head_block().offset() + self.block_size {
            let block = self.head_block();
            // Read the successor before releasing: cleanup resets `next`.
            let mut next = block.load_next();
            while next.is_null() {
                // Only reachable if the link is not yet visible; it must be,
                // since the tail already passed this block.
                debug_assert!(false, "block behind tail without successor");
                relax();
                next = block.load_next();
            }
            if block.deregister() {
                self.scan.cleanups += 1;
            }
            self.scan.deregistrations += 1;
            self.head_block = next;
        }
    }

    /// Successor of `block`, linking a block from our pool if there is none.
    fn successor(&mut self, block: &DataBlock<T>) -> *const DataBlock<T> {
        let next = block.load_next();
        if !next.is_null() {
            return next;
        }
        let fresh_ptr = self.acquire_block();
        // SAFETY: pool blocks live until the storage drops.
        let fresh = unsafe { &*fresh_ptr };
        if unsafe { block.add_block(fresh, self.num_places, self.handshake) } {
            self.counters.blocks_linked += 1;
            return fresh_ptr;
        }
        let mut next = block.load_next();
        while next.is_null() {
            relax();
            next = block.load_next();
        }
        next
    }

    /// A block from this place's pool that nobody references any more, or a
    /// freshly allocated one.
    fn acquire_block(&mut self) -> *const DataBlock<T> {
        let n = self.blocks.len();
        for step in 0..n {
            let idx = (self.block_cursor + step) % n;
            // SAFETY: pool blocks live until the storage drops.
            let block = unsafe { &*self.blocks[idx] };
            let reusable = match self.handshake {
                Handshake::Acquire => block.is_reusable(),
                Handshake::Fence => block.is_reusable_fenced(),
            };
            if reusable {
                self.block_cursor = (idx + 1) % n;
                if block.epoch() > 0 {
                    self.counters.blocks_reused += 1;
                }
                return self.blocks[idx];
            }
        }
        let ptr = self.storage.allocate_block(self.id);
        // SAFETY: just allocated, owned by the storage.
        let fresh = unsafe { &*ptr };
        let vetted = match self.handshake {
            Handshake::Acquire => fresh.is_reusable(),
            Handshake::Fence => fresh.is_reusable_fenced(),
        };
        debug_assert!(vetted);
        self.blocks.push(ptr);
        ptr
    }

    /// An initialized item from the pool, or a new one.
    fn acquire_item(&mut self, strategy: Strategy, payload: T) -> *const TaskItem<T> {
        if let Some(item) = self.items.take_reusable() {
            // SAFETY: take_reusable checked consumption and housing-block
            // cleanup, so no other thread can reach the payload or find the
            // item through a slot.
            unsafe { (*item).reinit(strategy, payload, self.id) };
            return item;
        }
        let mut item = Box::new(TaskItem::new());
        item.init(strategy, payload, self.id);
        let ptr: *const TaskItem<T> = &*item;
        self.items.owned.push(item);
        ptr
    }
}

impl<T> Place<T> {
    fn head_block(&self) -> &DataBlock<T> {
        // SAFETY: the head block is registered by this place, so it is live.
        unsafe { &*self.head_block }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    pub fn counters(&self) -> PerformanceCounters {
        self.counters
    }

    pub fn scan_stats(&self) -> ScanStats {
        self.scan
    }

    pub fn items_allocated(&self) -> usize {
        self.items.owned.len()
    }

    pub fn blocks_owned(&self) -> usize {
        self.blocks.len()
    }

    pub fn storage(&self) -> &GlobalTaskStorage<T> {
        &self.storage
    }

    pub fn storage_handle(&self) -> Arc<GlobalTaskStorage<T>> {
        Arc::clone(&self.storage)
    }
}

impl<T> Drop for Place<T> {
    fn drop(&mut self) {
        // Other heaps may still point at our items.
        self.storage.retire_items(std::mem::take(&mut self.items.owned));
    }
}

impl<T> fmt::Debug for Place<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Place")
            .field("id", &self.id)
            .field("head", &self.head)
            .field("head_block_offset", &self.head_block().offset())
            .field("tail_block_offset", &self.tail_block_offset)
            .field("heap_len", &self.heap.len())
            .field("counters", &self.counters)
            .field("scan", &self.scan)
            .finish_non_exhaustive()
    }
}

#[cfg(all(test, not(loom)))]
mod tests {
    use super::*;
    use crate::config::StorageConfig;

    fn places(n: usize, block_size: usize) -> Vec<Place<u64>> {
        GlobalTaskStorage::create(n, StorageConfig::default().with_block_size(block_size).with_audit(true)).unwrap()
    }

    fn s(priority: i64, k: usize) -> Strategy {
        Strategy::new(priority, k)
    }

    #[test]
    fn first_push_with_k_zero_lands_at_index_zero() {
        let mut ps = places(1, 4);
        let p = &mut ps[0];
        p.push(s(0, 0), 10);
        assert_eq!(p.storage().observe_tail(), 0);
        assert!(p.storage().start_block().is_occupied(0));
        assert_eq!(p.heap_len(), 1);
        // The next push finds window 0 full and moves the tail past it.
        p.push(s(0, 0), 11);
        assert_eq!(p.storage().observe_tail(), 1);
        assert!(p.storage().start_block().is_occupied(1));
    }

    #[test]
    fn full_block_gets_a_successor_at_the_next_offset() {
        let mut ps = places(1, 4);
        let p = &mut ps[0];
        for i in 0..5 {
            p.push(s(0, 0), i);
        }
        let start = p.storage().start_block();
        assert!(start.has_next());
        // SAFETY: test inspects the live list.
        let next = unsafe { &*start.load_next() };
        assert_eq!(next.offset(), 4);
        assert!(next.is_occupied(0));
        assert_eq!(p.counters().blocks_linked, 1);
        assert_eq!(p.storage().observe_tail(), 4);
    }

    #[test]
    fn update_heap_collects_visible_foreign_items() {
        let mut ps = places(2, 8);
        let (a, b) = ps.split_at_mut(1);
        let (a, b) = (&mut a[0], &mut b[0]);
        for i in 0..4 {
            a.push(s(i, 0), i as u64);
        }
        assert_eq!(a.storage().observe_tail(), 3);
        b.update_heap();
        assert_eq!(b.head(), 3);
        assert_eq!(b.heap_len(), 3);
        // Own items are never re-added from slots.
        a.update_heap();
        assert_eq!(a.head(), 3);
        assert_eq!(a.heap_len(), 4);
    }

    #[test]
    fn update_heap_is_noop_at_tail() {
        let mut ps = places(2, 8);
        ps[1].update_heap();
        assert_eq!(ps[1].head(), 0);
        assert_eq!(ps[1].heap_len(), 0);
    }

    #[test]
    fn taken_foreign_item_is_skipped_but_head_advances() {
        let mut ps = places(2, 8);
        let (a, b) = ps.split_at_mut(1);
        let (a, b) = (&mut a[0], &mut b[0]);
        a.push(s(5, 0), 1);
        a.push(s(1, 0), 2);
        assert_eq!(a.pop(), Some(1));
        b.update_heap();
        assert_eq!(b.head(), 1);
        assert_eq!(b.heap_len(), 0);
    }

    #[test]
    fn pop_prefers_priority_and_discards_foreign_takes() {
        let mut ps = places(2, 8);
        let (a, b) = ps.split_at_mut(1);
        let (a, b) = (&mut a[0], &mut b[0]);
        a.push(s(1, 0), 100);
        a.push(s(9, 0), 900);
        a.push(s(5, 0), 500);
        // b sees indices 0 and 1 (tail = 2).
        b.update_heap();
        assert_eq!(b.heap_len(), 2);
        assert_eq!(a.pop(), Some(900));
        // b's top entry (priority 9) is gone; it falls through to 100.
        assert_eq!(b.pop(), Some(100));
        assert_eq!(b.counters().heap_discards, 1);
        assert_eq!(a.pop(), Some(500));
        assert_eq!(a.pop(), None);
        assert_eq!(b.pop(), None);
        assert!(a.counters().heap_discards >= 1);
    }

    #[test]
    fn pop_on_empty_storage_signals_empty() {
        let mut ps = places(1, 4);
        assert_eq!(ps[0].pop(), None);
        assert_eq!(ps[0].counters().pop_empties, 1);
    }

    #[test]
    fn crossing_a_block_deregisters_it_once() {
        let mut ps = places(1, 2);
        let p = &mut ps[0];
        for i in 0..4 {
            p.push(s(0, 0), i);
        }
        assert_eq!(p.storage().observe_tail(), 3);
        p.update_heap();
        assert_eq!(p.head(), 3);
        assert_eq!(p.scan_stats().deregistrations, 1);
        assert_eq!(p.scan_stats().cleanups, 1);
        assert_eq!(p.head_block().offset(), 2);
        p.update_heap();
        assert_eq!(p.scan_stats().deregistrations, 1);
    }

    #[test]
    fn jumping_two_blocks_deregisters_both_in_order() {
        let mut ps = places(2, 2);
        let (a, b) = ps.split_at_mut(1);
        let (a, b) = (&mut a[0], &mut b[0]);
        for i in 0..6 {
            a.push(s(0, 0), i);
        }
        assert_eq!(a.storage().observe_tail(), 5);
        b.update_heap();
        assert_eq!(b.head(), 5);
        assert_eq!(b.scan_stats().deregistrations, 2);
        // a still holds both, so nothing was cleaned.
        assert_eq!(b.scan_stats().cleanups, 0);
        let histories = b.storage().block_histories();
        assert_eq!(histories[0].deregisters, 1);
        assert_eq!(histories[1].deregisters, 1);
        assert_eq!(histories[2].deregisters, 0);
    }

    #[test]
    fn acquire_block_allocates_when_pool_is_busy() {
        let mut ps = places(1, 2);
        let p = &mut ps[0];
        assert_eq!(p.blocks_owned(), 1);
        let fresh = p.acquire_block();
        assert_eq!(p.blocks_owned(), 2);
        assert_ne!(fresh, p.storage().start_block() as *const _);
        assert_eq!(p.counters().blocks_reused, 0);
    }

    #[test]
    fn deregistered_block_is_reused() {
        let mut ps = places(1, 2);
        let p = &mut ps[0];
        // Fill block 0 and 1, consume everything so head leaves block 0.
        for i in 0..4 {
            p.push(s(0, 0), i);
            assert!(p.pop().is_some());
        }
        assert_eq!(p.scan_stats().cleanups, 1);
        let before = p.blocks_owned();
        // Fill block 1's remainder and force a third block: block 0 returns.
        for i in 4..8 {
            p.push(s(0, 0), i);
            assert!(p.pop().is_some());
        }
        assert_eq!(p.blocks_owned(), before);
        assert!(p.counters().blocks_reused >= 1);
        assert_eq!(p.storage().blocks_allocated(), 2);
    }

    #[test]
    fn items_recycle_after_take_and_block_cleanup() {
        let mut ps = places(1, 2);
        let p = &mut ps[0];
        for i in 0..64 {
            p.push(s(0, 0), i);
            assert_eq!(p.pop(), Some(i));
        }
        // Steady state needs only the items of a couple of blocks.
        assert!(p.items_allocated() <= 8, "allocated {}", p.items_allocated());
    }

    #[test]
    fn lagging_place_pins_items() {
        let mut ps = places(2, 2);
        let (a, _lagging) = ps.split_at_mut(1);
        let a = &mut a[0];
        for i in 0..32 {
            a.push(s(0, 0), i);
            assert_eq!(a.pop(), Some(i));
        }
        // The second place never advanced, so no block was cleaned and no
        // item could be recycled.
        assert_eq!(a.scan_stats().cleanups, 0);
        assert_eq!(a.items_allocated(), 32);
    }
}
