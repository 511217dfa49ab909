//! Construction-time configuration of a task storage.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Default number of slots per data block.
pub const DEFAULT_BLOCK_SIZE: usize = 128;

/// Which memory orderings the storage uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingMode {
    /// Acquire/release/relaxed orderings, chosen per access.
    Relaxed,
    /// Every access sequentially consistent, plus a full fence between the
    /// `next` reset and the `active` store in block cleanup.
    Strict,
}

impl OrderingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderingMode::Relaxed => "relaxed",
            OrderingMode::Strict => "strict",
        }
    }
}

/// How the owner of a recycled block synchronizes with its last cleanup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handshake {
    /// Relaxed `is_reusable`, then an acquire load of `active` in `add_block`.
    Acquire,
    /// `is_reusable` issues an acquire fence when it sees `active == false`;
    /// `add_block` skips its extra load.
    Fence,
}

impl Handshake {
    pub fn as_str(self) -> &'static str {
        match self {
            Handshake::Acquire => "acquire",
            Handshake::Fence => "fence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageConfig {
    /// Slots per data block.
    pub block_size: usize,
    /// Probe limit per window in `put`; `None` means `block_size`.
    pub tests: Option<usize>,
    pub ordering: OrderingMode,
    pub handshake: Handshake,
    /// Seed for the per-place window pickers.
    pub seed: u64,
    /// Maintain per-block shadow counters for lifecycle audits.
    pub audit: bool,
    /// Inject random yields before atomic accesses.
    pub chaos: bool,
    /// Reloads of an empty slot below the tail tolerated before a debug
    /// build panics.
    pub spin_cap: u64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig {
            block_size: DEFAULT_BLOCK_SIZE,
            tests: None,
            ordering: OrderingMode::Relaxed,
            handshake: Handshake::Acquire,
            seed: 0,
            audit: false,
            chaos: false,
            spin_cap: 1 << 24,
        }
    }
}

impl StorageConfig {
    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn with_ordering(mut self, ordering: OrderingMode) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_handshake(mut self, handshake: Handshake) -> Self {
        self.handshake = handshake;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    pub fn with_chaos(mut self, chaos: bool) -> Self {
        self.chaos = chaos;
        self
    }

    pub fn effective_tests(&self) -> usize {
        self.tests.unwrap_or(self.block_size)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.block_size == 0 {
            return Err(Error::Config("block size must be at least 1".into()));
        }
        if self.tests == Some(0) {
            return Err(Error::Config("tests must be at least 1".into()));
        }
        Ok(())
    }
}
