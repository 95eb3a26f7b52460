//! Seeded generators and independent oracles shared by the integration
//! test targets.

#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrlab_core::cfi::TransactionDb;
use mrlab_core::optimizer::rewrite::rewrite_anywhere;
use mrlab_core::optimizer::{opt_phy_plan, Catalog, Law, Memo};
use mrlab_core::plan::{Attr, Plan, SchemaMap};
use mrlab_core::prob::ProbDatabase;
use mrlab_core::query::{ConjunctiveQuery, RelRef};
use mrlab_core::relation::{Relation, Value};
use mrlab_core::safety::{canonical_join, FdSet, SafetyChecker};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max_items` items over up to `max_tx` transactions.
pub fn random_transactions(rng: &mut impl Rng, max_items: usize, max_tx: usize) -> TransactionDb {
    let items = rng.gen_range(1..=max_items);
    let density = rng.gen_range(0.2..0.8);
    let n = rng.gen_range(1..=max_tx);
    let txs: Vec<Vec<String>> = (0..n)
        .map(|_| (0..items).filter(|_| rng.gen_bool(density)).map(|i| format!("i{i:02}")).collect())
        .collect();
    TransactionDb::new(txs)
}

const ATTR_NAMES: [&str; 3] = ["a", "b", "c"];

/// A query over `1..=max_rels` relations named `R0..`, each of arity 1 or
/// 2. Join predicates, constant selections and the nonempty head are
/// random; the join graph may be disconnected.
pub fn random_query(rng: &mut impl Rng, max_rels: usize) -> ConjunctiveQuery {
    let n = rng.gen_range(1..=max_rels);
    let rels: Vec<RelRef> = (0..n)
        .map(|i| {
            let mut names = ATTR_NAMES.to_vec();
            names.shuffle(rng);
            let arity = rng.gen_range(1..=2);
            RelRef { name: format!("R{i}"), attrs: names[..arity].iter().map(|s| s.to_string()).collect() }
        })
        .collect();
    let pick = |rng: &mut dyn rand::RngCore, r: &RelRef| Attr::new(r.name.clone(), r.attrs.choose(rng).unwrap().clone());
    let mut join_preds: Vec<(Attr, Attr)> = Vec::new();
    for i in 1..n {
        if rng.gen_bool(0.85) {
            let j = rng.gen_range(0..i);
            let p = (pick(rng, &rels[j]), pick(rng, &rels[i]));
            if !join_preds.contains(&p) {
                join_preds.push(p);
            }
        }
    }
    if n > 2 && rng.gen_bool(0.2) {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i < j {
            let p = (pick(rng, &rels[i]), pick(rng, &rels[j]));
            if !join_preds.contains(&p) {
                join_preds.push(p);
            }
        }
    }
    let attrs: Vec<Attr> = rels
        .iter()
        .flat_map(|r| r.attrs.iter().map(move |a| Attr::new(r.name.clone(), a.clone())))
        .collect();
    let mut sel_preds = Vec::new();
    for a in &attrs {
        if rng.gen_bool(0.12) {
            sel_preds.push((a.clone(), Value::Int(rng.gen_range(1..=2))));
        }
    }
    let mut head: Vec<Attr> = attrs.iter().filter(|_| rng.gen_bool(0.35)).cloned().collect();
    if head.is_empty() {
        head.push(attrs.choose(rng).unwrap().clone());
    }
    ConjunctiveQuery { rels, head, join_preds, sel_preds }
}

/// Tuples over the domain {1, 2}, each present with probability 0.6.
pub fn random_db(rng: &mut impl Rng, schemas: &SchemaMap) -> ProbDatabase {
    let rels = schemas.iter().map(|(name, attrs)| {
        let arity = attrs.len() as u32;
        let mut rows: Vec<(Vec<Value>, f64)> = Vec::new();
        for code in 0..2usize.pow(arity) {
            if rng.gen_bool(0.6) {
                let values = (0..arity).map(|k| Value::Int(1 + ((code >> k) & 1) as i64)).collect();
                rows.push((values, (rng.gen_range(5..=95) as f64) / 100.0));
            }
        }
        let attrs: Vec<&str> = attrs.iter().map(String::as_str).collect();
        Relation::base(name, &attrs, rows).unwrap()
    });
    ProbDatabase::new(rels.collect::<Vec<_>>()).unwrap()
}

/// Row counts log-uniform in [1, 10^4], distinct counts up to the row
/// count, and sometimes a statistic over a relation's whole attribute pair.
pub fn random_catalog(rng: &mut impl Rng, schemas: &SchemaMap) -> Catalog {
    let mut c = Catalog::new();
    for (rel, attrs) in schemas {
        let t = 10f64.powf(rng.gen_range(0.0..4.0)).round().max(1.0);
        c.set_rows(rel, t);
        let mut product = 1.0;
        let mut widest: f64 = 1.0;
        for a in attrs {
            let v = rng.gen_range(1.0..=t).round();
            product *= v;
            widest = widest.max(v);
            c.set_distinct(rel, &[a], v);
        }
        if attrs.len() > 1 && rng.gen_bool(0.3) {
            let v = rng.gen_range(widest..=product.min(t).max(widest)).round();
            let names: Vec<&str> = attrs.iter().map(String::as_str).collect();
            c.set_distinct(rel, &names, v);
        }
    }
    c
}

/// `Π_head(canonical join)` followed by up to `steps` random rewrites.
pub fn random_plan(rng: &mut impl Rng, q: &ConjunctiveQuery, steps: usize) -> Plan {
    let schemas = q.schemas();
    let mut p = Plan::project(q.head.clone(), canonical_join(q));
    for _ in 0..rng.gen_range(0..=steps) {
        let next = rewrite_anywhere(&p, &Law::ALL, &schemas);
        match next.choose(rng) {
            Some(n) => p = n.clone(),
            None => break,
        }
    }
    p
}

/// Every safe plan reachable from `start` by any sequence of rewrites,
/// passing through unsafe plans as well. `None` when more than `cap`
/// plans are reachable.
pub fn all_safe_equivalents(start: &Plan, schemas: &SchemaMap, base: &FdSet, cap: usize) -> Option<Vec<Plan>> {
    let mut seen: HashSet<Plan> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start.clone()]);
    let checker = SafetyChecker::new(schemas, base);
    let mut safe = Vec::new();
    while let Some(p) = queue.pop_front() {
        if checker.is_safe(&p).unwrap_or(false) {
            safe.push(p.clone());
        }
        for n in rewrite_anywhere(&p, &Law::ALL, schemas) {
            if seen.insert(n.clone()) {
                if seen.len() > cap {
                    return None;
                }
                queue.push_back(n);
            }
        }
    }
    Some(safe)
}

/// Cheapest estimated cost among `plans`.
pub fn min_cost(plans: &[Plan], catalog: &Catalog) -> f64 {
    let memo = Memo::new();
    plans.iter().map(|p| opt_phy_plan(p, catalog, &memo).unwrap().cost).fold(f64::INFINITY, f64::min)
}
