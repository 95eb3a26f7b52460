//! Invariants over seeded random inputs.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use mrlab_core::cache_sim::{
    simulate_job_sequence, simulate_with, CachePolicy, DataSource, JobSpec, NodeSpec, Scenario, SourceKind,
};
use mrlab_core::cfi::{brute_force_closed, mine_cfi, MiningConfig};
use mrlab_core::engine::{Engine, JobConfig};
use mrlab_core::lineage::DEFAULT_VARIABLE_LIMIT;
use mrlab_core::ops::Executor;
use mrlab_core::optimizer::{apply_sure_rules, generate_equivalents, opt_phy_plan, Memo};
use mrlab_core::plan::Attr;
use mrlab_core::prob::{
    enumerate_worlds, eval_plan_extensional, eval_plan_with_provenance, marginals_agree, oracle_marginals,
    DEFAULT_WORLD_LIMIT,
};
use mrlab_core::safety::{attr_closure, plan_is_safe, safe_plan, Fd, FdAttr, FdSet, SafetyChecker, SafetyError};

fn exec() -> Executor {
    Executor::default()
}

fn fd_attr(i: usize) -> FdAttr {
    match i {
        0..=5 => FdAttr::Col(Attr::new(format!("R{}", i / 3), ["a", "b", "c"][i % 3])),
        _ => FdAttr::Event(format!("R{}", i - 6)),
    }
}

fn attr_set(mask: u8) -> BTreeSet<FdAttr> {
    (0..8).filter(|i| mask >> i & 1 == 1).map(fd_attr).collect()
}

fn fd_set() -> impl Strategy<Value = FdSet> {
    prop::collection::vec((1u8.., any::<u8>()), 0..6)
        .prop_map(|fds| FdSet::new(fds.into_iter().map(|(l, r)| Fd::new(attr_set(l), attr_set(r))).collect()))
}

fn scenario(seed: u64, cached_only: bool) -> Scenario {
    let mut rng = common::rng(seed);
    let nodes = (0..rng.gen_range(1..=5))
        .map(|id| NodeSpec { id, capacity_records: rng.gen_range(0..=6) * 50 })
        .collect();
    let sources = ["s0", "s1"]
        .map(|id| DataSource { id: id.into(), kind: SourceKind::Dfs, remote_cost_per_record: rng.gen_range(0.5..3.0) })
        .to_vec();
    let jobs = (0..rng.gen_range(1..=4))
        .map(|_| JobSpec {
            source: if cached_only { "s0".into() } else { sources[rng.gen_range(0..2)].id.clone() },
            splits: rng.gen_range(1..=8),
            iterations: rng.gen_range(1..=4),
            records_per_split: rng.gen_range(1..=4) * 50,
        })
        .collect();
    Scenario { nodes, sources, jobs }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn safe_plan_matches_oracle(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 3);
        let db = common::random_db(&mut rng, &q.schemas());
        let plan = match safe_plan(&q, &FdSet::default()) {
            Ok(p) => p,
            Err(SafetyError::NoSafePlan) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let (got, _) = eval_plan_extensional(&db, &plan, &exec()).unwrap();
        let want = oracle_marginals(&db, &q, &Engine::sequential(), DEFAULT_WORLD_LIMIT).unwrap();
        prop_assert!(marginals_agree(&got, &want, 1e-9), "{q}\n{plan}\n{}\nvs\n{}", got.to_tsv(), want.to_tsv());
    }

    #[test]
    fn provenance_matches_oracle(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 3);
        let db = common::random_db(&mut rng, &q.schemas());
        let plan = common::random_plan(&mut rng, &q, 5);
        let (prov, _) = eval_plan_with_provenance(&db, &plan, &exec()).unwrap();
        let got = prov.marginals(&db, DEFAULT_VARIABLE_LIMIT).unwrap();
        let want = oracle_marginals(&db, &q, &Engine::sequential(), DEFAULT_WORLD_LIMIT).unwrap();
        prop_assert!(marginals_agree(&got, &want, 1e-9), "{q}\n{plan}");
    }

    #[test]
    fn world_probabilities_sum_to_one(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 3);
        let db = common::random_db(&mut rng, &q.schemas());
        let total: f64 = enumerate_worlds(&db, DEFAULT_WORLD_LIMIT).unwrap().map(|w| w.prob).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "total {total}");
    }

    #[test]
    fn closure_is_extensive_monotone_idempotent(fds in fd_set(), x in any::<u8>(), extra in any::<u8>()) {
        let small = attr_set(x);
        let large = attr_set(x | extra);
        let cl = attr_closure(&small, &fds);
        prop_assert!(small.is_subset(&cl));
        prop_assert!(cl.is_subset(&attr_closure(&large, &fds)));
        prop_assert_eq!(attr_closure(&cl, &fds), cl);
    }

    #[test]
    fn sure_rules_never_raise_cost(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 4);
        let schemas = q.schemas();
        let catalog = common::random_catalog(&mut rng, &schemas);
        let plan = common::random_plan(&mut rng, &q, 8);
        let memo = Memo::new();
        let before = opt_phy_plan(&plan, &catalog, &memo).unwrap().cost;
        let after = opt_phy_plan(&apply_sure_rules(&plan, &schemas), &catalog, &memo).unwrap().cost;
        prop_assert!(after <= before + 1e-9, "{before} -> {after} for {plan}");
    }

    #[test]
    fn equivalents_evaluate_identically(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 3);
        let schemas = q.schemas();
        let Ok(initial) = safe_plan(&q, &FdSet::default()) else { return Ok(()) };
        let db = common::random_db(&mut rng, &schemas);
        let (reference, _) = eval_plan_extensional(&db, &initial, &exec()).unwrap();
        for p in generate_equivalents(&initial, 50, &schemas, &FdSet::default()).plans {
            let (out, _) = eval_plan_extensional(&db, &p, &exec()).unwrap();
            prop_assert!(marginals_agree(&out, &reference, 1e-9), "{p} vs {initial}");
        }
    }

    #[test]
    fn shared_safety_memo_agrees_with_fresh_checks(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let q = common::random_query(&mut rng, 4);
        let schemas = q.schemas();
        let base = FdSet::default();
        let checker = SafetyChecker::new(&schemas, &base);
        for _ in 0..20 {
            let p = common::random_plan(&mut rng, &q, 8);
            prop_assert_eq!(checker.is_safe(&p).unwrap(), plan_is_safe(&p, &schemas, &base).unwrap(), "{}", p);
        }
    }

    #[test]
    fn caching_never_fetches_more(seed in any::<u64>()) {
        let s = scenario(seed, false);
        let on = simulate_job_sequence(&s, CachePolicy::On).unwrap();
        let off = simulate_job_sequence(&s, CachePolicy::Off).unwrap();
        for (a, b) in on.remote_records().iter().zip(off.remote_records()) {
            prop_assert!(*a <= b);
        }
        let first = &s.jobs[0];
        prop_assert_eq!(on.iterations[0].remote_records, first.splits as u64 * first.records_per_split);
        prop_assert_eq!(on.iterations[0].cache_hits, 0);
        for (r, job) in off.iterations.iter().map(|r| (r, &s.jobs[r.job - 1])) {
            prop_assert_eq!(r.remote_records, job.splits as u64 * job.records_per_split);
        }
    }

    #[test]
    fn directory_stays_coherent(seed in any::<u64>()) {
        let s = scenario(seed, true);
        let mut coherent = true;
        simulate_with(&s, CachePolicy::On, |c| coherent &= c.is_coherent()).unwrap();
        prop_assert!(coherent);
    }

    #[test]
    fn cfi_matches_brute_force(seed in any::<u64>(), workers in 1usize..=4) {
        let mut rng = common::rng(seed);
        let db = common::random_transactions(&mut rng, 10, 20);
        let min_sup = rng.gen_range(1..=db.len() as u64);
        let config = MiningConfig { engine: Engine::new(workers).unwrap(), split_size: rng.gen_range(1..=6), job: JobConfig::default() };
        let mined = mine_cfi(&db, min_sup, &config).unwrap();
        let mut got: Vec<_> = mined.closed.iter().map(|c| (c.closure.clone(), c.support)).collect();
        got.sort();
        prop_assert_eq!(got, brute_force_closed(&db, min_sup, 10).unwrap());
        let sequential = mine_cfi(&db, min_sup, &MiningConfig { engine: Engine::sequential(), ..config }).unwrap();
        prop_assert_eq!(&mined.closed, &sequential.closed);
    }
}
