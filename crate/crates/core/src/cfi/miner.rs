use std::collections::{BTreeMap, BTreeSet};

use super::itemset::{Item, Itemset, Transaction, TransactionDb};
use super::CfiError;
use crate::engine::{make_splits, CostCounters, Engine, JobConfig, MapReduce, Split, TaskError};

/// A closed itemset with one of its generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedItemset {
    pub closure: Itemset,
    pub generator: Itemset,
    pub support: u64,
    /// Item whose addition to the parent closure produced this one; `None`
    /// for the empty root.
    pub core: Option<Item>,
}

impl ClosedItemset {
    pub fn root() -> Self {
        Self { closure: Itemset::empty(), generator: Itemset::empty(), support: 0, core: None }
    }
}

/// One way a candidate generator was reached: extension item plus the
/// parent's closure restricted to items below it.
pub type ExtensionPath = (Item, Itemset);

/// Value of a generator message. Combinable: intersect, add, union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub intersection: Itemset,
    pub count: u64,
    pub paths: BTreeSet<ExtensionPath>,
}

/// Read-only state broadcast to every task of a mining iteration.
#[derive(Debug, Clone)]
pub struct LevelContext {
    pub frequent: BTreeSet<Item>,
    pub parents: Vec<ClosedItemset>,
    pub min_sup: u64,
}

/// Messages one transaction produces against the previous level. Each
/// generator key appears at most once per transaction.
pub fn cfi_map(t: &Transaction, parents: &[ClosedItemset], frequent: &BTreeSet<Item>) -> Vec<(Itemset, Candidate)> {
    let mut keys: BTreeMap<Itemset, BTreeSet<ExtensionPath>> = BTreeMap::new();
    for c in parents.iter().filter(|c| c.closure.is_subset_of(&t.items)) {
        for &item in t.items.items() {
            let extends = c.core.is_none_or(|core| item > core);
            if extends && frequent.contains(&item) && !c.closure.contains(item) {
                keys.entry(c.generator.with(item))
                    .or_default()
                    .insert((item, c.closure.below(item)));
            }
        }
    }
    keys.into_iter()
        .map(|(key, paths)| (key, Candidate { intersection: t.items.clone(), count: 1, paths }))
        .collect()
}

/// Folds candidate values for one key. Panics on an empty list.
pub fn cfi_combine(values: impl IntoIterator<Item = Candidate>) -> Candidate {
    let mut it = values.into_iter();
    let mut acc = it.next().expect("combine needs at least one value");
    for v in it {
        acc.intersection = acc.intersection.intersection(&v.intersection);
        acc.count += v.count;
        acc.paths.extend(v.paths);
    }
    acc
}

/// Support check, then keeps the closure only for the extension path that
/// preserves the parent's prefix, so each closed set is produced once.
pub fn cfi_reduce(key: &Itemset, values: Vec<Candidate>, min_sup: u64) -> Option<ClosedItemset> {
    let merged = cfi_combine(values);
    if merged.count < min_sup {
        return None;
    }
    let closure = merged.intersection;
    let (core, _) = merged.paths.iter().find(|(item, prefix)| closure.below(*item) == *prefix)?;
    Some(ClosedItemset {
        generator: key.clone(),
        support: merged.count,
        core: Some(*core),
        closure,
    })
}

struct FrequentItems {
    min_sup: u64,
}

impl MapReduce for FrequentItems {
    type Input = Transaction;
    type Key = Item;
    type Value = u64;
    type Output = (Item, u64);
    type Context = ();

    fn map(&self, _: &(), t: &Transaction, emit: &mut Vec<(Item, u64)>) -> Result<(), TaskError> {
        emit.extend(t.items.items().iter().map(|&i| (i, 1)));
        Ok(())
    }

    fn has_combiner(&self) -> bool {
        true
    }

    fn combine(&self, _: &Item, values: Vec<u64>) -> Vec<u64> {
        vec![values.iter().sum()]
    }

    fn reduce(&self, _: &(), key: &Item, values: Vec<u64>, emit: &mut Vec<(Item, u64)>) -> Result<(), TaskError> {
        let sup: u64 = values.iter().sum();
        if sup >= self.min_sup {
            emit.push((*key, sup));
        }
        Ok(())
    }
}

/// One level of closed-itemset growth.
pub struct CfiJob;

impl MapReduce for CfiJob {
    type Input = Transaction;
    type Key = Itemset;
    type Value = Candidate;
    type Output = ClosedItemset;
    type Context = LevelContext;

    fn map(&self, ctx: &LevelContext, t: &Transaction, emit: &mut Vec<(Itemset, Candidate)>) -> Result<(), TaskError> {
        emit.extend(cfi_map(t, &ctx.parents, &ctx.frequent));
        Ok(())
    }

    fn has_combiner(&self) -> bool {
        true
    }

    fn combine(&self, _: &Itemset, values: Vec<Candidate>) -> Vec<Candidate> {
        vec![cfi_combine(values)]
    }

    fn reduce(
        &self,
        ctx: &LevelContext,
        key: &Itemset,
        values: Vec<Candidate>,
        emit: &mut Vec<ClosedItemset>,
    ) -> Result<(), TaskError> {
        emit.extend(cfi_reduce(key, values, ctx.min_sup));
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MiningConfig {
    pub engine: Engine,
    pub split_size: usize,
    pub job: JobConfig,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self { engine: Engine::sequential(), split_size: 8, job: JobConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationStats {
    /// 1-based level number.
    pub level: usize,
    pub closed: usize,
    pub counters: CostCounters,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mining {
    pub frequent_items: BTreeMap<Item, u64>,
    pub frequent_counters: CostCounters,
    /// Sorted by support descending, then closure.
    pub closed: Vec<ClosedItemset>,
    /// One entry per job run, including the final job that found nothing.
    pub iterations: Vec<IterationStats>,
}

impl Mining {
    pub fn nonempty_levels(&self) -> usize {
        self.iterations.iter().filter(|s| s.closed > 0).count()
    }
}

/// Word-count style job: items with support at least `min_sup`.
pub fn find_frequent_items(
    db: &TransactionDb,
    min_sup: u64,
    config: &MiningConfig,
) -> Result<(BTreeMap<Item, u64>, CostCounters), CfiError> {
    if min_sup == 0 {
        return Err(CfiError::MinSupport);
    }
    let splits = make_splits(db.transactions().to_vec(), config.split_size)?;
    let out = config.engine.run(&FrequentItems { min_sup }, &config.job, &splits, &())?;
    let counters = out.counters.clone();
    Ok((out.into_records().into_iter().collect(), counters))
}

/// Runs one level: the closed itemsets reachable from `parents`.
pub fn mine_level(
    splits: &[Split<Transaction>],
    ctx: &LevelContext,
    config: &MiningConfig,
) -> Result<(Vec<ClosedItemset>, CostCounters), CfiError> {
    let out = config.engine.run(&CfiJob, &config.job, splits, ctx)?;
    let counters = out.counters.clone();
    let mut level = out.into_records();
    level.sort_by(|a, b| a.closure.cmp(&b.closure));
    Ok((level, counters))
}

/// Iterates levels until one comes back empty.
pub fn mine_cfi(db: &TransactionDb, min_sup: u64, config: &MiningConfig) -> Result<Mining, CfiError> {
    let (frequent_items, frequent_counters) = find_frequent_items(db, min_sup, config)?;
    let mut ctx = LevelContext {
        frequent: frequent_items.keys().copied().collect(),
        parents: vec![ClosedItemset::root()],
        min_sup,
    };
    let splits = make_splits(db.transactions().to_vec(), config.split_size)?;
    let mut closed = Vec::new();
    let mut iterations = Vec::new();
    loop {
        let (level, counters) = mine_level(&splits, &ctx, config)?;
        iterations.push(IterationStats { level: iterations.len() + 1, closed: level.len(), counters });
        if level.is_empty() {
            break;
        }
        closed.extend(level.iter().cloned());
        ctx.parents = level;
    }
    sort_output(&mut closed);
    Ok(Mining { frequent_items, frequent_counters, closed, iterations })
}

/// Support descending, then closure in lexicographic order.
pub fn sort_output(closed: &mut [ClosedItemset]) {
    closed.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.closure.cmp(&b.closure)));
}

/// `closure<TAB>generator<TAB>support` lines.
pub fn to_tsv(db: &TransactionDb, closed: &[ClosedItemset]) -> String {
    let mut out = String::new();
    for c in closed {
        out.push_str(&format!("{}\t{}\t{}\n", db.format(&c.closure), db.format(&c.generator), c.support));
    }
    out
}
