//! Closed frequent itemset mining as iterated MapReduce jobs.
//!
//! Level `i` extends every closed itemset of level `i - 1` by one frequent
//! item, closes the result by intersecting the supporting transactions and
//! keeps it only when the extension preserves the parent's items below the
//! added one. That makes each closed itemset appear exactly once.

mod galois;
mod itemset;
mod miner;
mod oracle;

pub use galois::{closure_h, galois_f, galois_g, support};
pub use itemset::{Item, Itemset, Transaction, TransactionDb};
pub use miner::{
    cfi_combine, cfi_map, cfi_reduce, find_frequent_items, mine_cfi, mine_level, sort_output, to_tsv, Candidate,
    CfiJob, ClosedItemset, ExtensionPath, IterationStats, LevelContext, Mining, MiningConfig,
};
pub use oracle::{brute_force_closed, DEFAULT_ITEM_LIMIT};

use crate::engine::EngineError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CfiError {
    #[error("minimum support must be at least 1")]
    MinSupport,
    #[error("brute-force oracle refuses {items} items (limit {limit})")]
    TooManyItems { items: usize, limit: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}
