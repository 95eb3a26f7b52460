//! Split-level input cache across iterative jobs.
//!
//! Each node keeps an LRU cache of whole splits. Tasks run in waves, one per
//! free node: splits cached on a free node go there first, the rest are
//! handed out round-robin. A miss fetches the split's records from its
//! source and caches it on the node that ran the task.
//!
//! ```text
//! node 1 300
//! source edges dfs 1.5
//! job edges 4 3 100
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    LocalFile,
    Dfs,
    Database,
    Api,
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local-file" => Ok(SourceKind::LocalFile),
            "dfs" => Ok(SourceKind::Dfs),
            "database" => Ok(SourceKind::Database),
            "api" => Ok(SourceKind::Api),
            _ => Err(format!("unknown source kind `{s}` (local-file, dfs, database, api)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub id: String,
    pub kind: SourceKind,
    pub remote_cost_per_record: f64,
}

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub capacity_records: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSpec {
    pub source: String,
    pub splits: usize,
    pub iterations: usize,
    pub records_per_split: u64,
}

pub const DEFAULT_RECORDS_PER_SPLIT: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub nodes: Vec<NodeSpec>,
    pub sources: Vec<DataSource>,
    pub jobs: Vec<JobSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scenario has no nodes")]
    NoNodes,
    #[error("job refers to unknown source `{0}`")]
    UnknownSource(String),
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario { nodes: vec![], sources: vec![], jobs: vec![] };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ScenarioError::Parse { line: i + 1, msg };
            let num = |f: &str, what: &str| f.parse::<u64>().map_err(|_| err(format!("bad {what} `{f}`")));
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["node", id, cap] => {
                    let id = id.parse::<NodeId>().map_err(|_| err(format!("bad node id `{id}`")))?;
                    if s.nodes.iter().any(|n| n.id == id) {
                        return Err(err(format!("node {id} declared twice")));
                    }
                    s.nodes.push(NodeSpec { id, capacity_records: num(cap, "capacity")? });
                }
                ["source", id, kind, cost] => {
                    let kind = kind.parse().map_err(err)?;
                    let cost = cost
                        .parse::<f64>()
                        .ok()
                        .filter(|c| c.is_finite() && *c >= 0.0)
                        .ok_or_else(|| err(format!("bad cost `{cost}`")))?;
                    s.sources.push(DataSource { id: id.to_string(), kind, remote_cost_per_record: cost });
                }
                ["job", source, splits, iters, rest @ ..] if rest.len() <= 1 => {
                    let records_per_split = match rest {
                        [r] => num(r, "split size")?,
                        _ => DEFAULT_RECORDS_PER_SPLIT,
                    };
                    s.jobs.push(JobSpec {
                        source: source.to_string(),
                        splits: num(splits, "split count")? as usize,
                        iterations: num(iters, "iteration count")? as usize,
                        records_per_split,
                    });
                }
                _ => return Err(err(format!("unrecognized line `{line}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.nodes.is_empty() {
            return Err(ScenarioError::NoNodes);
        }
        for j in &self.jobs {
            if !self.sources.iter().any(|s| s.id == j.source) {
                return Err(ScenarioError::UnknownSource(j.source.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CachePolicy {
    On,
    Off,
}

/// Identifies a split of a source.
pub type SplitKey = (String, usize);

#[derive(Debug, Clone)]
struct NodeCache {
    id: NodeId,
    capacity: u64,
    used: u64,
    /// Least recently used first.
    lru: VecDeque<(SplitKey, u64)>,
}

impl NodeCache {
    fn contains(&self, key: &SplitKey) -> bool {
        self.lru.iter().any(|(k, _)| k == key)
    }

    fn touch(&mut self, key: &SplitKey) {
        if let Some(i) = self.lru.iter().position(|(k, _)| k == key) {
            let e = self.lru.remove(i).unwrap();
            self.lru.push_back(e);
        }
    }

    /// Caches `key`, returning evicted keys.
    fn insert(&mut self, key: SplitKey, records: u64) -> Vec<SplitKey> {
        let mut evicted = Vec::new();
        while self.used + records > self.capacity {
            let (k, r) = self.lru.pop_front().expect("split fits in an empty cache");
            self.used -= r;
            evicted.push(k);
        }
        self.used += records;
        self.lru.push_back((key, records));
        evicted
    }
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub job: usize,
    pub source: String,
    pub iteration: usize,
    pub remote_records: u64,
    pub remote_cost: f64,
    pub cache_hits: u64,
    pub evictions: u64,
    /// Tasks whose split was cached only on nodes already busy in the wave.
    pub locality_misses: u64,
    /// Splits larger than the node that ran them could ever cache.
    pub uncacheable: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub iterations: Vec<IterationReport>,
}

impl SimReport {
    pub fn remote_records(&self) -> Vec<u64> {
        self.iterations.iter().map(|r| r.remote_records).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "job\tsource\titeration\tremote_records\tremote_cost\tcache_hits\tevictions\tlocality_misses\tuncacheable\n",
        );
        for r in &self.iterations {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.job,
                r.source,
                r.iteration,
                r.remote_records,
                r.remote_cost,
                r.cache_hits,
                r.evictions,
                r.locality_misses,
                r.uncacheable
            ));
        }
        out
    }
}

impl fmt::Display for SimReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_tsv())
    }
}

/// Node caches plus the job-level directory of which nodes hold a split.
#[derive(Debug, Clone)]
pub struct Cluster {
    nodes: Vec<NodeCache>,
    directory: BTreeMap<SplitKey, BTreeSet<NodeId>>,
    next_rr: usize,
}

impl Cluster {
    pub fn new(nodes: &[NodeSpec]) -> Self {
        let mut nodes: Vec<NodeCache> = nodes
            .iter()
            .map(|n| NodeCache { id: n.id, capacity: n.capacity_records, used: 0, lru: VecDeque::new() })
            .collect();
        nodes.sort_by_key(|n| n.id);
        Self { nodes, directory: BTreeMap::new(), next_rr: 0 }
    }

    /// Nodes caching `key`.
    pub fn holders(&self, key: &SplitKey) -> BTreeSet<NodeId> {
        self.directory.get(key).cloned().unwrap_or_default()
    }

    /// Whether the directory lists exactly the splits each node caches.
    pub fn is_coherent(&self) -> bool {
        let mut actual: BTreeMap<SplitKey, BTreeSet<NodeId>> = BTreeMap::new();
        for n in &self.nodes {
            if n.used > n.capacity || n.used != n.lru.iter().map(|(_, r)| r).sum::<u64>() {
                return false;
            }
            for (k, _) in &n.lru {
                actual.entry(k.clone()).or_default().insert(n.id);
            }
        }
        actual == self.directory
    }

    /// A free node caching `key` (lowest id), else the next free node in
    /// round-robin order. `free` must be nonempty.
    pub fn assign_task(&mut self, key: &SplitKey, free: &BTreeSet<NodeId>) -> NodeId {
        if let Some(n) = self.holders(key).intersection(free).next() {
            return *n;
        }
        self.round_robin(free)
    }

    fn round_robin(&mut self, free: &BTreeSet<NodeId>) -> NodeId {
        assert!(!free.is_empty(), "no free node");
        loop {
            let id = self.nodes[self.next_rr % self.nodes.len()].id;
            self.next_rr = (self.next_rr + 1) % self.nodes.len();
            if free.contains(&id) {
                return id;
            }
        }
    }

    fn node_mut(&mut self, id: NodeId) -> &mut NodeCache {
        self.nodes.iter_mut().find(|n| n.id == id).expect("known node")
    }

    /// Runs every split of one iteration and reports its costs.
    fn run_iteration(&mut self, job: &JobSpec, source: &DataSource, policy: CachePolicy, report: &mut IterationReport) {
        let mut pending: Vec<usize> = (0..job.splits).collect();
        while !pending.is_empty() {
            let mut free: BTreeSet<NodeId> = self.nodes.iter().map(|n| n.id).collect();
            let mut wave: Vec<(usize, NodeId)> = Vec::new();
            // Locality pass.
            pending.retain(|&s| {
                let key = (job.source.clone(), s);
                match self.holders(&key).intersection(&free).next().copied() {
                    Some(n) if !free.is_empty() => {
                        free.remove(&n);
                        wave.push((s, n));
                        false
                    }
                    _ => true,
                }
            });
            // Everything else, round-robin over the remaining free nodes.
            while !free.is_empty() && !pending.is_empty() {
                let s = pending.remove(0);
                let n = self.round_robin(&free);
                free.remove(&n);
                wave.push((s, n));
            }
            wave.sort();
            for (s, n) in wave {
                self.run_task((job.source.clone(), s), n, job.records_per_split, source, policy, report);
            }
        }
    }

    fn run_task(
        &mut self,
        key: SplitKey,
        node: NodeId,
        records: u64,
        source: &DataSource,
        policy: CachePolicy,
        report: &mut IterationReport,
    ) {
        if self.node_mut(node).contains(&key) {
            self.node_mut(node).touch(&key);
            report.cache_hits += 1;
            return;
        }
        if !self.holders(&key).is_empty() {
            report.locality_misses += 1;
        }
        report.remote_records += records;
        report.remote_cost += records as f64 * source.remote_cost_per_record;
        if policy == CachePolicy::Off {
            return;
        }
        let cache = self.node_mut(node);
        if records > cache.capacity {
            report.uncacheable += 1;
            return;
        }
        let evicted = cache.insert(key.clone(), records);
        report.evictions += evicted.len() as u64;
        for k in evicted {
            if let Some(set) = self.directory.get_mut(&k) {
                set.remove(&node);
                if set.is_empty() {
                    self.directory.remove(&k);
                }
            }
        }
        self.directory.entry(key).or_default().insert(node);
    }
}

/// Runs the scenario's jobs in order on one cluster whose caches persist
/// across jobs.
pub fn simulate_job_sequence(scenario: &Scenario, policy: CachePolicy) -> Result<SimReport, ScenarioError> {
    simulate_with(scenario, policy, |_| {})
}

/// As [`simulate_job_sequence`], calling `observe` after every iteration.
pub fn simulate_with(
    scenario: &Scenario,
    policy: CachePolicy,
    mut observe: impl FnMut(&Cluster),
) -> Result<SimReport, ScenarioError> {
    scenario.validate()?;
    let mut cluster = Cluster::new(&scenario.nodes);
    let mut iterations = Vec::new();
    for (j, job) in scenario.jobs.iter().enumerate() {
        let source = scenario.sources.iter().find(|s| s.id == job.source).expect("validated");
        for it in 1..=job.iterations {
            let mut r = IterationReport {
                job: j + 1,
                source: job.source.clone(),
                iteration: it,
                remote_records: 0,
                remote_cost: 0.0,
                cache_hits: 0,
                evictions: 0,
                locality_misses: 0,
                uncacheable: 0,
            };
            cluster.run_iteration(job, source, policy, &mut r);
            observe(&cluster);
            iterations.push(r);
        }
    }
    Ok(SimReport { iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(nodes: &[(NodeId, u64)], jobs: &[(usize, usize, u64)]) -> Scenario {
        Scenario {
            nodes: nodes.iter().map(|&(id, c)| NodeSpec { id, capacity_records: c }).collect(),
            sources: vec![DataSource { id: "src".into(), kind: SourceKind::Dfs, remote_cost_per_record: 1.0 }],
            jobs: jobs
                .iter()
                .map(|&(splits, iterations, r)| JobSpec { source: "src".into(), splits, iterations, records_per_split: r })
                .collect(),
        }
    }

    #[test]
    fn four_splits_on_four_nodes() {
        let s = scenario(&[(1, 100), (2, 100), (3, 100), (4, 100)], &[(4, 3, 100)]);
        assert_eq!(simulate_job_sequence(&s, CachePolicy::On).unwrap().remote_records(), vec![400, 0, 0]);
        assert_eq!(simulate_job_sequence(&s, CachePolicy::Off).unwrap().remote_records(), vec![400, 400, 400]);
    }

    #[test]
    fn lru_pressure_refetches_one_split() {
        let s = scenario(&[(1, 300)], &[(4, 3, 100)]);
        let r = simulate_job_sequence(&s, CachePolicy::On).unwrap();
        assert_eq!(r.remote_records(), vec![400, 100, 100]);
        let hits: Vec<u64> = r.iterations.iter().map(|i| i.cache_hits).collect();
        let evictions: Vec<u64> = r.iterations.iter().map(|i| i.evictions).collect();
        assert_eq!(hits, vec![0, 3, 3]);
        assert_eq!(evictions, vec![1, 1, 1]);
    }

    #[test]
    fn oversized_split_is_never_cached() {
        let s = scenario(&[(1, 50)], &[(2, 2, 100)]);
        let r = simulate_job_sequence(&s, CachePolicy::On).unwrap();
        assert_eq!(r.remote_records(), vec![200, 200]);
        assert_eq!(r.iterations[0].uncacheable, 2);
    }

    #[test]
    fn assignment_prefers_cached_free_node() {
        let mut c = Cluster::new(&[1, 2, 3].map(|id| NodeSpec { id, capacity_records: 100 }));
        let key = ("src".to_string(), 0);
        c.node_mut(2).insert(key.clone(), 10);
        c.directory.entry(key.clone()).or_default().insert(2);
        assert!(c.is_coherent());
        assert_eq!(c.assign_task(&key, &BTreeSet::from([1, 2, 3])), 2);
        let other = ("src".to_string(), 1);
        assert_eq!(c.assign_task(&other, &BTreeSet::from([1, 2, 3])), 1);
        assert_eq!(c.assign_task(&other, &BTreeSet::from([1, 2, 3])), 2);
        // Cached only on a busy node: regular assignment.
        assert_eq!(c.assign_task(&key, &BTreeSet::from([1, 3])), 3);
    }

    #[test]
    fn busy_holder_falls_back_and_records_locality() {
        let s = scenario(&[(1, 200), (2, 200)], &[(2, 1, 100)]);
        let mut c = Cluster::new(&s.nodes);
        let mut report = IterationReport {
            job: 1,
            source: "src".into(),
            iteration: 1,
            remote_records: 0,
            remote_cost: 0.0,
            cache_hits: 0,
            evictions: 0,
            locality_misses: 0,
            uncacheable: 0,
        };
        for split in 0..2 {
            c.run_task(("src".into(), split), 1, 100, &s.sources[0], CachePolicy::On, &mut report);
        }
        assert_eq!(report.remote_records, 200);
        let mut report = IterationReport { remote_records: 0, remote_cost: 0.0, ..report };
        c.run_iteration(&s.jobs[0], &s.sources[0], CachePolicy::On, &mut report);
        assert_eq!((report.cache_hits, report.locality_misses, report.remote_records), (1, 1, 100));
        assert_eq!(c.holders(&("src".into(), 1)), BTreeSet::from([1, 2]));
        assert!(c.is_coherent());
    }

    #[test]
    fn directory_stays_coherent() {
        let s = scenario(&[(1, 250), (2, 120), (3, 400)], &[(7, 4, 60), (3, 2, 150)]);
        let mut coherent = true;
        simulate_with(&s, CachePolicy::On, |c| coherent &= c.is_coherent()).unwrap();
        assert!(coherent);
    }

    #[test]
    fn scenario_file() {
        let text = "# cluster\nnode 1 300\nsource edges dfs 1.5\njob edges 4 3\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.jobs[0].records_per_split, DEFAULT_RECORDS_PER_SPLIT);
        let r = simulate_job_sequence(&s, CachePolicy::On).unwrap();
        assert_eq!(r.iterations[0].remote_cost, 600.0);
        assert!(r.to_tsv().starts_with("job\tsource\titeration\t"));
        assert_eq!(
            Scenario::parse("node 1 3\njob x 1 1\n"),
            Err(ScenarioError::UnknownSource("x".into()))
        );
        assert!(matches!(Scenario::parse("node a 3"), Err(ScenarioError::Parse { line: 1, .. })));
        assert!(matches!(Scenario::parse("source s tape 1"), Err(ScenarioError::Parse { line: 1, .. })));
        assert_eq!(Scenario::parse(""), Err(ScenarioError::NoNodes));
    }
}
