//! Sequential engine against a multi-worker engine on the same jobs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrlab_core::cfi::{mine_cfi, MiningConfig, TransactionDb};
use mrlab_core::engine::{make_splits, Engine, JobConfig, KeyValue, WordCount};
use mrlab_core::prob::{oracle_marginals, ProbDatabase};
use mrlab_core::query::parse_query;
use mrlab_core::relation::{Relation, Value};

fn engines() -> Vec<(usize, Engine)> {
    let n = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    vec![(1, Engine::sequential()), (n, Engine::new(n).unwrap())]
}

fn word_count(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let docs: Vec<KeyValue<usize, String>> = (0..4000)
        .map(|i| {
            let words: Vec<String> = (0..40).map(|_| format!("w{}", rng.gen_range(0..500))).collect();
            KeyValue::new(i, words.join(" "))
        })
        .collect();
    let splits = make_splits(docs, 100).unwrap();
    let mut group = c.benchmark_group("word_count");
    for (workers, engine) in engines() {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &engine, |b, e| {
            b.iter(|| e.run(&WordCount, &JobConfig::default(), &splits, &()).unwrap())
        });
    }
    group.finish();
}

fn closed_itemsets(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let txs: Vec<Vec<String>> = (0..3000)
        .map(|_| (0..16).filter(|_| rng.gen_bool(0.35)).map(|i| format!("i{i:02}")).collect())
        .collect();
    let db = TransactionDb::new(txs);
    let mut group = c.benchmark_group("cfi");
    group.sample_size(10);
    for (workers, engine) in engines() {
        let config = MiningConfig { engine, split_size: 100, job: JobConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(workers), &config, |b, cfg| {
            b.iter(|| mine_cfi(&db, 150, cfg).unwrap())
        });
    }
    group.finish();
}

fn world_oracle(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rel = |name: &str, attrs: &[&str], n: i64| {
        let rows = (0..n).map(|i| (vec![Value::Int(i % 3), Value::Int(i / 3)], rng.gen_range(0.1..0.9))).collect();
        Relation::base(name, attrs, rows).unwrap()
    };
    let db = ProbDatabase::new(vec![rel("R", &["a", "b"], 7), rel("S", &["b", "c"], 7)]).unwrap();
    let q = parse_query("SELECT DISTINCT R.a FROM R, S WHERE R.b = S.b", &db.schemas()).unwrap();
    let mut group = c.benchmark_group("world_oracle");
    group.sample_size(10);
    for (workers, engine) in engines() {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &engine, |b, e| {
            b.iter(|| oracle_marginals(&db, &q, e, 20).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, word_count, closed_itemsets, world_oracle);
criterion_main!(benches);
