//! Deterministic in-process MapReduce executor.
//!
//! A job runs one map task per [`Split`], an optional per-task combiner, a
//! hash partitioner, a stable sort-by-key shuffle and one reduce task per
//! partition. Task outputs are merged in task-id order, so results and
//! [`CostCounters`] do not depend on how many workers ran the tasks.

mod partition;
mod wordcount;

use std::fmt;
use std::hash::Hash;

pub use partition::{partition, Fnv1a};
pub use wordcount::WordCount;

/// A key/value record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyValue<K, V> {
    pub key: K,
    pub value: V,
}

impl<K, V> KeyValue<K, V> {
    pub fn new(key: K, value: V) -> Self {
        Self { key, value }
    }
}

/// The input of one map task.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub id: usize,
    pub records: Vec<T>,
}

/// Chops `records` into consecutive splits of at most `split_size` records.
pub fn make_splits<T>(records: Vec<T>, split_size: usize) -> Result<Vec<Split<T>>, EngineError> {
    if split_size == 0 {
        return Err(EngineError::InvalidConfig("split_size must be at least 1".into()));
    }
    let mut splits = Vec::with_capacity(records.len().div_ceil(split_size));
    let mut it = records.into_iter().peekable();
    while it.peek().is_some() {
        let records: Vec<T> = it.by_ref().take(split_size).collect();
        splits.push(Split { id: splits.len(), records });
    }
    Ok(splits)
}

/// Communication cost of a job: input records of every map and reduce task.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostCounters {
    pub map_input_records: Vec<u64>,
    pub reduce_input_records: Vec<u64>,
}

impl CostCounters {
    pub fn map_total(&self) -> u64 {
        self.map_input_records.iter().sum()
    }

    pub fn reduce_total(&self) -> u64 {
        self.reduce_input_records.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.map_total() + self.reduce_total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Map,
    Reduce,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Map => "map",
            Phase::Reduce => "reduce",
        })
    }
}

/// Error raised by user map/combine/reduce code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TaskError(pub String);

impl TaskError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid job configuration: {0}")]
    InvalidConfig(String),
    #[error("{phase} task {task} failed: {source}")]
    Task {
        phase: Phase,
        task: usize,
        source: TaskError,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// A job with a reduce phase.
pub trait MapReduce: Sync {
    type Input: Sync;
    type Key: Ord + Hash + Clone + Send + Sync;
    type Value: Send + Sync;
    type Output: Send;
    /// Read-only state shared by every task.
    type Context: Sync + ?Sized;

    fn map(
        &self,
        ctx: &Self::Context,
        record: &Self::Input,
        emit: &mut Vec<(Self::Key, Self::Value)>,
    ) -> Result<(), TaskError>;

    fn has_combiner(&self) -> bool {
        false
    }

    /// Folds the values one map task emitted for `key`. Must be safe to apply
    /// zero, one or many times.
    fn combine(&self, _key: &Self::Key, values: Vec<Self::Value>) -> Vec<Self::Value> {
        values
    }

    fn reduce(
        &self,
        ctx: &Self::Context,
        key: &Self::Key,
        values: Vec<Self::Value>,
        emit: &mut Vec<Self::Output>,
    ) -> Result<(), TaskError>;
}

/// A job without a reduce phase; its output is the concatenated map output.
pub trait MapOnly: Sync {
    type Input: Sync;
    type Output: Send;
    type Context: Sync + ?Sized;

    fn map(&self, ctx: &Self::Context, record: &Self::Input, emit: &mut Vec<Self::Output>) -> Result<(), TaskError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobConfig {
    pub num_reducers: usize,
    /// Run the job's combiner (if it has one) on each map task's output.
    pub combine: bool,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self { num_reducers: 4, combine: true }
    }
}

/// Output of a job, one vector per reduce task (a single vector for map-only jobs).
#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput<O> {
    pub partitions: Vec<Vec<O>>,
    pub counters: CostCounters,
}

impl<O> JobOutput<O> {
    pub fn into_records(self) -> Vec<O> {
        self.partitions.into_iter().flatten().collect()
    }
}

/// Task executor. With the `parallel` feature and more than one worker,
/// tasks of a phase run on a dedicated rayon pool.
#[derive(Clone)]
pub struct Engine {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine").field("workers", &self.workers).finish()
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Engine {
    pub fn sequential() -> Self {
        Self {
            workers: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// An engine running up to `workers` tasks at once. Without the
    /// `parallel` feature every engine is sequential.
    pub fn new(workers: usize) -> Result<Self, EngineError> {
        let workers = workers.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = if workers > 1 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| EngineError::Pool(e.to_string()))?;
                Some(std::sync::Arc::new(pool))
            } else {
                None
            };
            Ok(Self { workers, pool })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Self { workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Applies `f` to every item, preserving item order in the result.
    pub fn run_tasks<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.into_par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
        }
        items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    pub fn run<J: MapReduce>(
        &self,
        job: &J,
        config: &JobConfig,
        splits: &[Split<J::Input>],
        ctx: &J::Context,
    ) -> Result<JobOutput<J::Output>, EngineError> {
        if config.num_reducers == 0 {
            return Err(EngineError::InvalidConfig("num_reducers must be at least 1".into()));
        }
        let reducers = config.num_reducers;
        let combine = config.combine && job.has_combiner();

        let map_results = self.run_tasks(splits.iter().collect(), |_, split: &Split<J::Input>| {
            let mut out = Vec::new();
            for record in &split.records {
                job.map(ctx, record, &mut out).map_err(|source| EngineError::Task {
                    phase: Phase::Map,
                    task: split.id,
                    source,
                })?;
            }
            if combine {
                out = combine_task_output(job, out);
            }
            let mut parts: Vec<Vec<(J::Key, J::Value)>> = (0..reducers).map(|_| Vec::new()).collect();
            for (k, v) in out {
                let p = partition(&k, reducers);
                parts[p].push((k, v));
            }
            Ok((split.records.len() as u64, parts))
        });

        let mut counters = CostCounters::default();
        let mut shuffled: Vec<Vec<(J::Key, J::Value)>> = (0..reducers).map(|_| Vec::new()).collect();
        for result in map_results {
            let (input, parts) = result?;
            counters.map_input_records.push(input);
            for (dst, src) in shuffled.iter_mut().zip(parts) {
                dst.extend(src);
            }
        }

        let reduce_results = self.run_tasks(shuffled, |task, mut records: Vec<(J::Key, J::Value)>| {
            let input = records.len() as u64;
            // Stable: values of one key keep map-task order, then emission order.
            records.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Vec::new();
            for (key, values) in group_sorted(records) {
                job.reduce(ctx, &key, values, &mut out).map_err(|source| EngineError::Task {
                    phase: Phase::Reduce,
                    task,
                    source,
                })?;
            }
            Ok((input, out))
        });

        let mut partitions = Vec::with_capacity(reducers);
        for result in reduce_results {
            let (input, out) = result?;
            counters.reduce_input_records.push(input);
            partitions.push(out);
        }
        Ok(JobOutput { partitions, counters })
    }

    pub fn run_map_only<J: MapOnly>(
        &self,
        job: &J,
        splits: &[Split<J::Input>],
        ctx: &J::Context,
    ) -> Result<JobOutput<J::Output>, EngineError> {
        let results = self.run_tasks(splits.iter().collect(), |_, split: &Split<J::Input>| {
            let mut out = Vec::new();
            for record in &split.records {
                job.map(ctx, record, &mut out).map_err(|source| EngineError::Task {
                    phase: Phase::Map,
                    task: split.id,
                    source,
                })?;
            }
            Ok((split.records.len() as u64, out))
        });
        let mut counters = CostCounters::default();
        let mut output = Vec::new();
        for result in results {
            let (input, out) = result?;
            counters.map_input_records.push(input);
            output.extend(out);
        }
        Ok(JobOutput { partitions: vec![output], counters })
    }
}

fn combine_task_output<J: MapReduce>(job: &J, mut out: Vec<(J::Key, J::Value)>) -> Vec<(J::Key, J::Value)> {
    out.sort_by(|a, b| a.0.cmp(&b.0));
    let mut combined = Vec::new();
    for (key, values) in group_sorted(out) {
        for v in job.combine(&key, values) {
            combined.push((key.clone(), v));
        }
    }
    combined
}

/// Groups consecutive equal keys of a key-sorted vector.
fn group_sorted<K: Eq, V>(records: Vec<(K, V)>) -> Vec<(K, Vec<V>)> {
    let mut groups: Vec<(K, Vec<V>)> = Vec::new();
    for (k, v) in records {
        match groups.last_mut() {
            Some((last, values)) if *last == k => values.push(v),
            _ => groups.push((k, vec![v])),
        }
    }
    groups
}
