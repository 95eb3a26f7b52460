//! `mrlab`: closed itemset mining, probabilistic queries, plan costs and
//! cache simulation from the command line.
//!
//! Reports go to stdout as TSV, diagnostics to stderr. Exit status is 0 on
//! success, 1 on bad input and 2 when a query has no safe plan.

mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mrlab_core::cache_sim::{simulate_job_sequence, CachePolicy, Scenario};
use mrlab_core::cfi::{mine_cfi, to_tsv, MiningConfig, TransactionDb};
use mrlab_core::engine::Engine;
use mrlab_core::lineage::DEFAULT_VARIABLE_LIMIT;
use mrlab_core::ops::Executor;
use mrlab_core::optimizer::{self, estimate_plan_cost, find_best_plan, opt_phy_plan, Memo, OptError, PhysicalPlan};
use mrlab_core::plan::Plan;
use mrlab_core::prob::{
    enumerate_worlds, eval_plan_extensional, eval_plan_with_provenance, oracle_marginals, PlanCost, DEFAULT_WORLD_LIMIT,
};
use mrlab_core::relation::{format_prob, Relation};
use mrlab_core::safety::{canonical_join, safe_plan, unsafe_projections, SafetyError};

use data::Workspace;

#[derive(Parser, Debug)]
#[command(name = "mrlab", version, about)]
struct Cli {
    /// Worker threads for map and reduce tasks (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed frequent itemsets of a transaction file.
    Mine {
        /// One transaction per line, items separated by whitespace.
        #[arg(long)]
        transactions: PathBuf,
        /// Absolute count, or a percentage of transactions such as `40%`.
        #[arg(long)]
        min_sup: String,
        /// Transactions per map split.
        #[arg(long, default_value_t = 8)]
        split_size: usize,
    },
    /// Answer a query with per-tuple probabilities.
    Query {
        #[command(flatten)]
        input: QueryInput,
        #[arg(long, value_enum, default_value_t = Mode::Safe)]
        mode: Mode,
        /// Plan text file, or builtin `P1` / `P2`.
        #[arg(long)]
        plan: Option<String>,
        /// Largest tuple count the oracle will enumerate worlds for.
        #[arg(long, default_value_t = DEFAULT_WORLD_LIMIT)]
        max_worlds: usize,
    },
    /// Safe plan, cheapest equivalent, its jobs and estimated cost.
    Plan {
        #[command(flatten)]
        input: QueryInput,
        /// Cost this plan instead of searching.
        #[arg(long)]
        plan: Option<String>,
        #[arg(long, default_value_t = optimizer::DEFAULT_SEARCH_BOUND)]
        bound: usize,
    },
    /// Every possible world of the database with its probability.
    Worlds {
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WORLD_LIMIT)]
        max_worlds: usize,
    },
    /// Remote fetches per iteration with and without split caching.
    SimulateCache {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = CacheMode::Both)]
        cache: CacheMode,
    },
}

#[derive(Args, Debug)]
struct QueryInput {
    /// Directory of `<Relation>.tsv` files and an optional `catalog.tsv`.
    /// Defaults to the built-in employee database.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Query text. Defaults to the built-in query on the built-in database.
    #[arg(long, conflicts_with = "query_file")]
    query: Option<String>,
    #[arg(long)]
    query_file: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    /// Generated safe plan, extensional evaluation.
    Safe,
    /// Cheapest safe equivalent under the catalog.
    Optimized,
    /// Any plan, extensional evaluation, warns if it fails the safety test.
    Unsafe,
    /// Any plan, lineage formulas evaluated exactly.
    Provenance,
    /// Possible-world enumeration.
    Oracle,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CacheMode {
    On,
    Off,
    Both,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_no_safe_plan(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_no_safe_plan(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<SafetyError>(), Some(SafetyError::NoSafePlan))
            || matches!(c.downcast_ref::<OptError>(), Some(OptError::Safety(SafetyError::NoSafePlan)))
    })
}

fn engine(workers: Option<usize>) -> Result<Engine> {
    let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(Engine::new(n)?)
}

fn run(cli: Cli) -> Result<()> {
    let engine = engine(cli.workers)?;
    match cli.command {
        Command::Mine { transactions, min_sup, split_size } => mine(&transactions, &min_sup, split_size, engine),
        Command::Query { input, mode, plan, max_worlds } => {
            query(&Workspace::load(input.db.as_deref())?, &input, mode, plan.as_deref(), max_worlds, engine)
        }
        Command::Plan { input, plan, bound } => explain(&Workspace::load(input.db.as_deref())?, &input, plan.as_deref(), bound),
        Command::Worlds { db, max_worlds } => worlds(&Workspace::load(db.as_deref())?, max_worlds),
        Command::SimulateCache { scenario, cache } => simulate(&scenario, cache),
    }
}

fn parse_min_sup(text: &str, n: usize) -> Result<u64> {
    let v = if let Some(pct) = text.strip_suffix('%') {
        let p: f64 = pct.trim().parse().with_context(|| format!("bad percentage `{text}`"))?;
        if !(0.0..=100.0).contains(&p) {
            bail!("percentage `{text}` is outside 0..100");
        }
        (p / 100.0 * n as f64).ceil() as u64
    } else {
        text.trim().parse().with_context(|| format!("bad minimum support `{text}`"))?
    };
    if v == 0 {
        bail!("minimum support `{text}` rounds to 0");
    }
    Ok(v)
}

fn mine(path: &std::path::Path, min_sup: &str, split_size: usize, engine: Engine) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let db = TransactionDb::parse(&text);
    let min_sup = parse_min_sup(min_sup, db.len())?;
    let config = MiningConfig { engine, split_size, ..Default::default() };
    let mining = mine_cfi(&db, min_sup, &config)?;
    eprintln!("{} transactions, {} frequent items, min support {min_sup}", db.len(), mining.frequent_items.len());
    print!("closure\tgenerator\tsupport\n{}", to_tsv(&db, &mining.closed));
    println!("\nlevel\tclosed\tmap_input\treduce_input\ttotal");
    let f = &mining.frequent_counters;
    println!("0\t{}\t{}\t{}\t{}", mining.frequent_items.len(), f.map_total(), f.reduce_total(), f.total());
    for it in &mining.iterations {
        let c = &it.counters;
        println!("{}\t{}\t{}\t{}\t{}", it.level, it.closed, c.map_total(), c.reduce_total(), c.total());
    }
    Ok(())
}

fn print_answers(r: &Relation, with_lineage: bool) {
    let mut header = r.schema.attrs.join("\t");
    header.push_str("\tprob");
    if with_lineage {
        header.push_str("\tlineage");
    }
    println!("{header}");
    let mut tuples: Vec<_> = r.tuples.iter().collect();
    tuples.sort_by(|a, b| a.values.cmp(&b.values));
    for t in tuples {
        let values: Vec<String> = t.values.iter().map(|v| v.to_string()).collect();
        let mut line = format!("{}\t{}", values.join("\t"), format_prob(t.prob));
        if with_lineage {
            line.push_str(&format!("\t{}", t.lineage));
        }
        println!("{line}");
    }
}

fn print_costs(cost: &PlanCost) {
    println!("\nop\tnode\tmap_input\treduce_input\ttotal");
    for o in &cost.ops {
        let c = &o.counters;
        println!("{}\t{}\t{}\t{}\t{}", o.op, o.node, c.map_total(), c.reduce_total(), c.total());
    }
    println!("total\t-\t-\t-\t{}", cost.total());
}

fn warn_if_unsafe(ws: &Workspace, plan: &Plan) -> Result<()> {
    let bad = unsafe_projections(plan, &ws.db.schemas(), &ws.catalog.fds)?;
    if let Some(p) = bad.first() {
        eprintln!("warning: plan failed the safety test; probabilities may be wrong");
        eprintln!("warning: unsafe projection {p}");
    }
    Ok(())
}

fn query(
    ws: &Workspace,
    input: &QueryInput,
    mode: Mode,
    plan_arg: Option<&str>,
    max_worlds: usize,
    engine: Engine,
) -> Result<()> {
    let q = ws.query(input)?;
    eprintln!("query: {q}");
    let exec = Executor { engine, ..Default::default() };
    let plan_or_default = || -> Result<Plan> {
        match plan_arg {
            Some(p) => data::load_plan(p),
            None => Ok(Plan::project(q.head.clone(), canonical_join(&q))),
        }
    };
    match mode {
        Mode::Safe => {
            let plan = match plan_arg {
                Some(p) => {
                    let plan = data::load_plan(p)?;
                    if !unsafe_projections(&plan, &ws.db.schemas(), &ws.catalog.fds)?.is_empty() {
                        return Err(SafetyError::NoSafePlan).context("the given plan failed the safety test");
                    }
                    plan
                }
                None => safe_plan(&q, &ws.catalog.fds)?,
            };
            eprintln!("plan: {plan}");
            let (r, cost) = eval_plan_extensional(&ws.db, &plan, &exec)?;
            print_answers(&r, false);
            print_costs(&cost);
        }
        Mode::Optimized => {
            if plan_arg.is_some() {
                bail!("--plan is not used with --mode optimized");
            }
            let best = find_best_plan(&q, &ws.catalog, &ws.db.schemas(), optimizer::DEFAULT_SEARCH_BOUND)?;
            eprintln!("plan: {}", best.logical);
            eprintln!("estimated cost: {}", best.cost);
            let (r, cost) = optimizer::execute_physical(&ws.db, &best.physical, &exec)?;
            print_answers(&r, false);
            print_costs(&cost);
        }
        Mode::Unsafe => {
            let plan = plan_or_default()?;
            eprintln!("plan: {plan}");
            warn_if_unsafe(ws, &plan)?;
            let (r, cost) = eval_plan_extensional(&ws.db, &plan, &exec)?;
            print_answers(&r, false);
            print_costs(&cost);
        }
        Mode::Provenance => {
            let plan = plan_or_default()?;
            eprintln!("plan: {plan}");
            let (prov, cost) = eval_plan_with_provenance(&ws.db, &plan, &exec)?;
            print_answers(&prov.marginals(&ws.db, DEFAULT_VARIABLE_LIMIT)?, true);
            print_costs(&cost);
        }
        Mode::Oracle => {
            if plan_arg.is_some() {
                bail!("--plan is not used with --mode oracle");
            }
            let r = oracle_marginals(&ws.db, &q, &exec.engine, max_worlds)?;
            print_answers(&r, false);
        }
    }
    Ok(())
}

fn print_jobs(phys: &PhysicalPlan, ws: &Workspace) -> Result<()> {
    println!("job\tpattern\tnode\testimated_cost");
    for (i, j) in phys.jobs.iter().enumerate() {
        println!("{}\t{}\t{}\t{}", i + 1, j.pattern.name(), j.node, j.cost);
    }
    println!("estimated_cost\t{}", estimate_plan_cost(phys, &ws.catalog)?);
    Ok(())
}

fn explain(ws: &Workspace, input: &QueryInput, plan_arg: Option<&str>, bound: usize) -> Result<()> {
    let schemas = ws.db.schemas();
    if let Some(p) = plan_arg {
        let plan = data::load_plan(p)?;
        plan.output_attrs(&schemas)?;
        let safe = unsafe_projections(&plan, &schemas, &ws.catalog.fds)?.is_empty();
        println!("plan\t{plan}");
        println!("safe\t{safe}");
        let entry = opt_phy_plan(&plan, &ws.catalog, &Memo::new())?;
        return print_jobs(&entry.physical, ws);
    }
    let q = ws.query(input)?;
    let best = find_best_plan(&q, &ws.catalog, &schemas, bound)?;
    if best.truncated {
        eprintln!("warning: search stopped at {bound} plans");
    }
    println!("safe_plan\t{}", best.initial);
    println!("safe_plan_cost\t{}", best.initial_cost);
    println!("best_plan\t{}", best.logical);
    println!("explored\t{}", best.explored);
    print_jobs(&best.physical, ws)
}

fn worlds(ws: &Workspace, limit: usize) -> Result<()> {
    println!("world\tprob\tpresent");
    let mut total = 0.0;
    for (i, w) in enumerate_worlds(&ws.db, limit)?.enumerate() {
        total += w.prob;
        let present: Vec<&str> = w.present.iter().map(|e| e.as_str()).collect();
        println!("{}\t{}\t{}", i + 1, format_prob(w.prob), present.join(","));
    }
    eprintln!("total probability {}", format_prob(total));
    Ok(())
}

fn simulate(path: &std::path::Path, mode: CacheMode) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::parse(&text)?;
    let policies: &[(CachePolicy, &str)] = match mode {
        CacheMode::On => &[(CachePolicy::On, "on")],
        CacheMode::Off => &[(CachePolicy::Off, "off")],
        CacheMode::Both => &[(CachePolicy::On, "on"), (CachePolicy::Off, "off")],
    };
    let mut header_done = false;
    for (policy, name) in policies {
        let report = simulate_job_sequence(&scenario, *policy)?;
        for (i, line) in report.to_tsv().lines().enumerate() {
            if i == 0 {
                if !header_done {
                    println!("cache\t{line}");
                    header_done = true;
                }
            } else {
                println!("{name}\t{line}");
            }
        }
        let total: u64 = report.remote_records().iter().sum();
        eprintln!("cache {name}: {total} remote records");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_sup_forms() {
        assert_eq!(parse_min_sup("3", 5).unwrap(), 3);
        assert_eq!(parse_min_sup("40%", 5).unwrap(), 2);
        assert_eq!(parse_min_sup("50%", 5).unwrap(), 3);
        assert!(parse_min_sup("0", 5).is_err());
        assert!(parse_min_sup("0%", 5).is_err());
        assert!(parse_min_sup("120%", 5).is_err());
        assert!(parse_min_sup("x", 5).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
