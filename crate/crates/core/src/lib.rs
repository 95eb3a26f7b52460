//! A single-process MapReduce laboratory: closed frequent itemset mining,
//! query evaluation over probabilistic databases, and a split cache
//! simulation, all with communication-cost accounting.

pub mod cache_sim;
pub mod cfi;
pub mod engine;
pub mod fixtures;
pub mod lineage;
pub mod ops;
pub mod optimizer;
pub mod plan;
pub mod prob;
pub mod query;
pub mod relation;
pub mod safety;
