//! The shared part of the storage: global tail and the first data block.

use std::fmt;
use std::sync::{Arc, Mutex};

use crate::block::{BlockHistory, DataBlock};
use crate::config::StorageConfig;
use crate::error::Result;
use crate::item::TaskItem;
use crate::place::Place;
use crate::sync::{AtomicUsize, Atomics, Ordering};

pub struct GlobalTaskStorage<T> {
    tail: AtomicUsize,
    start_block: *const DataBlock<T>,
    num_places: usize,
    config: StorageConfig,
    atomics: Atomics,
    // Every block ever allocated. Blocks are recycled, never freed, until the
    // storage itself drops. Boxed so addresses survive the Vec growing.
    #[allow(clippy::vec_box)]
    blocks: Mutex<Vec<Box<DataBlock<T>>>>,
    // Item allocations handed back by dropped places.
    retired_items: Mutex<Vec<Box<TaskItem<T>>>>,
}

// SAFETY: `start_block` points into `blocks`, which lives as long as `self`.
unsafe impl<T: Send> Send for GlobalTaskStorage<T> {}
unsafe impl<T: Send> Sync for GlobalTaskStorage<T> {}

impl<T: Send> GlobalTaskStorage<T> {
    /// Builds a storage shared by `num_places` places and returns the places,
    /// indexed by id. Each place is meant to be moved to its own thread.
    pub fn create(num_places: usize, config: StorageConfig) -> Result<Vec<Place<T>>> {
        config.validate()?;
        if num_places == 0 {
            return Err(crate::Error::Config("need at least one place".into()));
        }
        let atomics = Atomics::new(config.ordering, config.chaos);
        let start = Box::new(DataBlock::new(config.block_size, 0, atomics, config.audit));
        start.activate_as_start(num_places);
        let start_ptr: *const DataBlock<T> = &*start;
        let storage = Arc::new(GlobalTaskStorage {
            tail: AtomicUsize::new(0),
            start_block: start_ptr,
            num_places,
            config,
            atomics,
            blocks: Mutex::new(vec![start]),
            retired_items: Mutex::new(Vec::new()),
        });
        Ok((0..num_places)
            .map(|id| Place::new(id, Arc::clone(&storage), start_ptr))
            .collect())
    }
}

impl<T> GlobalTaskStorage<T> {
    pub fn num_places(&self) -> usize {
        self.num_places
    }

    pub fn config(&self) -> &StorageConfig {
        &self.config
    }

    pub(crate) fn atomics(&self) -> Atomics {
        self.atomics
    }

    pub fn start_block(&self) -> &DataBlock<T> {
        // SAFETY: owned by `self.blocks`.
        unsafe { &*self.start_block }
    }

    /// Relaxed read used by `push` to pick its starting window.
    pub(crate) fn load_tail_relaxed(&self) -> usize {
        self.atomics.point();
        self.tail.load(self.atomics.ord(Ordering::Relaxed))
    }

    /// Acquire read of the tail. Every slot below the returned index is
    /// filled, and the items in them are fully initialized for this thread.
    pub fn observe_tail(&self) -> usize {
        self.atomics.point();
        self.tail.load(self.atomics.ord(Ordering::Acquire))
    }

    /// Moves the tail forward to `cur_tail` unless it is already there or
    /// beyond. Returns whether this call stored.
    pub fn advance_tail(&self, cur_tail: usize) -> bool {
        let a = self.atomics;
        debug_assert!(cur_tail < isize::MAX as usize, "global index overflow");
        a.point();
        let mut nold_tail = self.tail.load(a.ord(Ordering::Relaxed));
        let mut diff = cur_tail as isize - nold_tail as isize;
        while diff > 0 {
            a.point();
            match self.tail.compare_exchange_weak(
                nold_tail,
                cur_tail,
                a.ord(Ordering::Release),
                a.ord(Ordering::Relaxed),
            ) {
                Ok(_) => return true,
                Err(observed) => {
                    nold_tail = observed;
                    diff = cur_tail as isize - nold_tail as isize;
                }
            }
        }
        false
    }

    pub(crate) fn allocate_block(&self, owner: usize) -> *const DataBlock<T> {
        let block = Box::new(DataBlock::new(
            self.config.block_size,
            owner,
            self.atomics,
            self.config.audit,
        ));
        let ptr: *const DataBlock<T> = &*block;
        self.blocks.lock().expect("block registry poisoned").push(block);
        ptr
    }

    pub(crate) fn retire_items(&self, items: Vec<Box<TaskItem<T>>>) {
        if !items.is_empty() {
            self.retired_items.lock().expect("item registry poisoned").extend(items);
        }
    }

    pub fn blocks_allocated(&self) -> usize {
        self.blocks.lock().expect("block registry poisoned").len()
    }

    /// Shadow histories of all blocks, in allocation order. Only meaningful
    /// with `StorageConfig::audit` enabled.
    pub fn block_histories(&self) -> Vec<BlockHistory> {
        self.blocks
            .lock()
            .expect("block registry poisoned")
            .iter()
            .map(|b| b.history())
            .collect()
    }
}

impl<T> fmt::Debug for GlobalTaskStorage<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GlobalTaskStorage")
            .field("tail", &self.tail.load(Ordering::Relaxed))
            .field("num_places", &self.num_places)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}
