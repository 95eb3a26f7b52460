//! Physical plans: logical plans covered by single-job patterns.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use super::catalog::{Catalog, CatalogError};
use super::estimate::{estimate_size, Estimate};
use crate::ops::{op_join, select_all, select_join, select_project_or_exists, Comparison, Executor};
use crate::plan::{Cond, Plan};
use crate::prob::{qualified, OpCost, PlanCost, ProbDatabase, ProbError};
use crate::relation::Relation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Select,
    Project,
    Join,
    SelectProject,
    SelectJoin,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Pattern::Select => "SELECT",
            Pattern::Project => "PROJECT",
            Pattern::Join => "JOIN",
            Pattern::SelectProject => "SELECT_PROJECT",
            Pattern::SelectJoin => "SELECT_JOIN",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One MapReduce job covering the logical subtree rooted at `node` down to
/// `inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub pattern: Pattern,
    pub node: Plan,
    pub inputs: Vec<Plan>,
    pub cost: f64,
}

/// Jobs in execution order; each job's inputs are scans or earlier jobs.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPlan {
    pub root: Plan,
    pub jobs: Vec<Job>,
}

impl fmt::Display for PhysicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, j) in self.jobs.iter().enumerate() {
            writeln!(f, "{}\t{}\t{}", i + 1, j.pattern, j.node)?;
        }
        Ok(())
    }
}

/// Selections stacked on top of `p`, outermost first, and what they filter.
fn select_chain(p: &Plan) -> (Vec<&Cond>, &Plan) {
    let mut conds = Vec::new();
    let mut cur = p;
    while let Plan::Select(c, child) = cur {
        conds.push(c);
        cur = child;
    }
    (conds, cur)
}

/// Conditions on the path from `top` down to `bottom` through selections.
fn conds_between<'a>(top: &'a Plan, bottom: &Plan) -> Vec<&'a Cond> {
    let mut conds = Vec::new();
    let mut cur = top;
    while cur != bottom {
        match cur {
            Plan::Select(c, child) => {
                conds.push(c);
                cur = child;
            }
            _ => unreachable!("job input is not below a selection chain"),
        }
    }
    conds
}

#[derive(Debug, Clone)]
pub struct MemoEntry {
    pub physical: PhysicalPlan,
    pub cost: f64,
    pub size: f64,
}

/// Best covers and estimates of subplans. Entries are written once.
#[derive(Debug, Default)]
pub struct Memo {
    best: Mutex<HashMap<Plan, Arc<MemoEntry>>>,
    sizes: Mutex<HashMap<Plan, Arc<Estimate>>>,
}

impl Memo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.best.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn estimate(&self, p: &Plan, catalog: &Catalog) -> Result<Arc<Estimate>, CatalogError> {
        if let Some(e) = self.sizes.lock().unwrap().get(p) {
            return Ok(e.clone());
        }
        let e = Arc::new(estimate_size(p, catalog)?);
        Ok(self.sizes.lock().unwrap().entry(p.clone()).or_insert(e).clone())
    }

    fn rows(&self, p: &Plan, catalog: &Catalog) -> Result<f64, CatalogError> {
        Ok(self.estimate(p, catalog)?.rows)
    }
}

/// Estimated cost of one job: records read by mappers plus records
/// shuffled to reducers.
pub fn job_cost(job: &Job, catalog: &Catalog) -> Result<f64, CatalogError> {
    job_cost_with(job.pattern, &job.node, &job.inputs, catalog, &Memo::new())
}

fn job_cost_with(pattern: Pattern, node: &Plan, inputs: &[Plan], catalog: &Catalog, memo: &Memo) -> Result<f64, CatalogError> {
    let rows = |p: &Plan| memo.rows(p, catalog);
    Ok(match (pattern, node) {
        (Pattern::Select, _) => rows(&inputs[0])?,
        (Pattern::Project, _) => 2.0 * rows(&inputs[0])?,
        (Pattern::SelectProject, Plan::Project(_, child)) => rows(&inputs[0])? + rows(child)?,
        (Pattern::Join, _) => 2.0 * (rows(&inputs[0])? + rows(&inputs[1])?),
        (Pattern::SelectJoin, Plan::Join(_, l, r)) => {
            let mut total = 0.0;
            for (side, input) in [(l, &inputs[0]), (r, &inputs[1])] {
                total += if **side == *input { 2.0 * rows(side)? } else { rows(input)? + rows(side)? };
            }
            total
        }
        _ => unreachable!("pattern does not match its node"),
    })
}

pub fn estimate_plan_cost(p: &PhysicalPlan, catalog: &Catalog) -> Result<f64, CatalogError> {
    let memo = Memo::new();
    p.jobs.iter().map(|j| job_cost_with(j.pattern, &j.node, &j.inputs, catalog, &memo)).sum()
}

/// Patterns that can cover `p` at its root, with their inputs.
fn covers_at(p: &Plan) -> Vec<(Pattern, Vec<Plan>)> {
    match p {
        Plan::Scan(_) => vec![],
        Plan::Select(..) => vec![(Pattern::Select, vec![select_chain(p).1.clone()])],
        Plan::Project(_, child) => {
            let mut out = vec![(Pattern::Project, vec![(**child).clone()])];
            let (conds, base) = select_chain(child);
            if !conds.is_empty() {
                out.push((Pattern::SelectProject, vec![base.clone()]));
            }
            out
        }
        Plan::Join(_, l, r) => {
            let (lc, lb) = select_chain(l);
            let (rc, rb) = select_chain(r);
            let mut out = vec![(Pattern::Join, vec![(**l).clone(), (**r).clone()])];
            if !lc.is_empty() {
                out.push((Pattern::SelectJoin, vec![lb.clone(), (**r).clone()]));
            }
            if !rc.is_empty() {
                out.push((Pattern::SelectJoin, vec![(**l).clone(), rb.clone()]));
            }
            if !lc.is_empty() && !rc.is_empty() {
                out.push((Pattern::SelectJoin, vec![lb.clone(), rb.clone()]));
            }
            out
        }
    }
}

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Minimum-cost cover of `p` by patterns. Equal costs go to the plan whose
/// job listing sorts first.
pub fn opt_phy_plan(p: &Plan, catalog: &Catalog, memo: &Memo) -> Result<Arc<MemoEntry>, CatalogError> {
    if let Some(e) = memo.best.lock().unwrap().get(p) {
        return Ok(e.clone());
    }
    let size = memo.rows(p, catalog)?;
    let mut best: Option<(MemoEntry, String)> = None;
    if matches!(p, Plan::Scan(_)) {
        best = Some((MemoEntry { physical: PhysicalPlan { root: p.clone(), jobs: vec![] }, cost: 0.0, size }, String::new()));
    }
    for (pattern, inputs) in covers_at(p) {
        let cost = job_cost_with(pattern, p, &inputs, catalog, memo)?;
        let mut jobs = Vec::new();
        let mut total = cost;
        for input in &inputs {
            let sub = opt_phy_plan(input, catalog, memo)?;
            total += sub.cost;
            jobs.extend(sub.physical.jobs.iter().cloned());
        }
        jobs.push(Job { pattern, node: p.clone(), inputs, cost });
        let physical = PhysicalPlan { root: p.clone(), jobs };
        let key = physical.to_string();
        let better = match &best {
            None => true,
            Some((b, bkey)) => {
                if same_cost(total, b.cost) {
                    key < *bkey
                } else {
                    total < b.cost
                }
            }
        };
        if better {
            best = Some((MemoEntry { physical, cost: total, size }, key));
        }
    }
    let entry = Arc::new(best.expect("every node has a cover").0);
    Ok(memo.best.lock().unwrap().entry(p.clone()).or_insert(entry).clone())
}

fn strings(conds: &[&Cond]) -> Vec<Comparison<String>> {
    conds.iter().map(|c| c.map(|a| a.to_string())).collect()
}

/// Runs each job as one operator call and reports measured costs.
pub fn execute_physical(db: &ProbDatabase, p: &PhysicalPlan, exec: &Executor) -> Result<(Relation, PlanCost), ProbError> {
    p.root.output_attrs(&db.schemas())?;
    let mut done: HashMap<&Plan, Relation> = HashMap::new();
    let fetch = |done: &HashMap<&Plan, Relation>, q: &Plan| -> Result<Relation, ProbError> {
        match q {
            Plan::Scan(name) => Ok(qualified(db.relation(name).ok_or_else(|| ProbError::UnknownRelation(name.clone()))?)?),
            _ => Ok(done.get(q).expect("job input computed earlier").clone()),
        }
    };
    let mut cost = PlanCost::default();
    for job in &p.jobs {
        let (out, counters) = match (job.pattern, &job.node) {
            (Pattern::Select, node) => {
                let conds = conds_between(node, &job.inputs[0]);
                select_all(exec, &fetch(&done, &job.inputs[0])?, &strings(&conds))?
            }
            (Pattern::Project, Plan::Project(attrs, _)) => {
                let names: Vec<String> = attrs.iter().map(|a| a.to_string()).collect();
                select_project_or_exists(exec, &fetch(&done, &job.inputs[0])?, &[], &names)?
            }
            (Pattern::SelectProject, Plan::Project(attrs, child)) => {
                let names: Vec<String> = attrs.iter().map(|a| a.to_string()).collect();
                let conds = conds_between(child, &job.inputs[0]);
                select_project_or_exists(exec, &fetch(&done, &job.inputs[0])?, &strings(&conds), &names)?
            }
            (Pattern::Join | Pattern::SelectJoin, Plan::Join(preds, l, r)) => {
                let on: Vec<(String, String)> = preds.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
                let (lc, rc) = (conds_between(l, &job.inputs[0]), conds_between(r, &job.inputs[1]));
                let (left, right) = (fetch(&done, &job.inputs[0])?, fetch(&done, &job.inputs[1])?);
                if job.pattern == Pattern::Join {
                    op_join(exec, &left, &right, Some(&on))?
                } else {
                    select_join(exec, &left, &strings(&lc), &right, &strings(&rc), Some(&on))?
                }
            }
            _ => unreachable!("pattern does not match its node"),
        };
        cost.ops.push(OpCost { op: job.pattern.name(), node: job.node.to_string(), counters });
        done.insert(&job.node, out);
    }
    let out = fetch(&done, &p.root)?;
    Ok((out, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, eq_const};
    use crate::plan::Attr;
    use crate::prob::{eval_plan_extensional, marginals_agree};

    fn a(r: &str, n: &str) -> Attr {
        Attr::new(r, n)
    }

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        c.set_rows("R", 1000.0).set_distinct("R", &["a"], 10.0).set_distinct("R", &["b"], 100.0);
        c.set_rows("S", 50.0).set_distinct("S", &["b"], 50.0);
        c
    }

    #[test]
    fn select_project_is_one_job() {
        let p = Plan::project(vec![a("R", "b")], Plan::select(eq_const("R", "a", 1), Plan::scan("R")));
        let best = opt_phy_plan(&p, &catalog(), &Memo::new()).unwrap();
        assert_eq!(best.physical.jobs.len(), 1);
        assert_eq!(best.physical.jobs[0].pattern, Pattern::SelectProject);
        assert_eq!(best.cost, 1000.0 + 100.0);
        // SELECT then PROJECT: read 1000, then read and shuffle 100 twice.
        let sel = Plan::select(eq_const("R", "a", 1), Plan::scan("R"));
        let two = opt_phy_plan(&sel, &catalog(), &Memo::new()).unwrap().cost + 2.0 * 100.0;
        assert!(best.cost < two);
        assert_eq!(estimate_plan_cost(&best.physical, &catalog()).unwrap(), best.cost);
    }

    #[test]
    fn leaf_and_single_select() {
        let memo = Memo::new();
        let leaf = opt_phy_plan(&Plan::scan("R"), &catalog(), &memo).unwrap();
        assert!(leaf.physical.jobs.is_empty());
        assert_eq!((leaf.cost, leaf.size), (0.0, 1000.0));
        let sel = opt_phy_plan(&Plan::select(eq_const("R", "a", 1), Plan::scan("R")), &catalog(), &memo).unwrap();
        assert_eq!(sel.cost, 1000.0);
        assert_eq!(estimate_plan_cost(&PhysicalPlan { root: Plan::scan("R"), jobs: vec![] }, &catalog()).unwrap(), 0.0);
    }

    #[test]
    fn selection_above_join_stays_separate() {
        let j = Plan::join(vec![(a("R", "b"), a("S", "b"))], Plan::scan("R"), Plan::scan("S"));
        let p = Plan::select(eq_const("R", "a", 1), j);
        let best = opt_phy_plan(&p, &catalog(), &Memo::new()).unwrap();
        let patterns: Vec<Pattern> = best.physical.jobs.iter().map(|j| j.pattern).collect();
        assert_eq!(patterns, vec![Pattern::Join, Pattern::Select]);
        // join size 1000·50/100 = 500
        assert_eq!(best.cost, 2.0 * 1050.0 + 500.0);
    }

    #[test]
    fn fused_join_costs() {
        let p = Plan::join(
            vec![(a("R", "b"), a("S", "b"))],
            Plan::select(eq_const("R", "a", 1), Plan::scan("R")),
            Plan::scan("S"),
        );
        let best = opt_phy_plan(&p, &catalog(), &Memo::new()).unwrap();
        assert_eq!(best.physical.jobs.len(), 1);
        assert_eq!(best.physical.jobs[0].pattern, Pattern::SelectJoin);
        assert_eq!(best.cost, 1000.0 + 100.0 + 2.0 * 50.0);
    }

    #[test]
    fn p1_and_p2_costs_at_example_sizes() {
        let mut c = Catalog::new();
        c.set_rows("Emp", 3.0).set_rows("Dept", 2.0).set_rows("Rank", 2.0);
        c.set_distinct("Emp", &["did", "rid"], 2.0).set_distinct("Emp", &["did"], 2.0).set_distinct("Emp", &["rid"], 1.0);
        c.set_distinct("Dept", &["did"], 2.0).set_distinct("Rank", &["rid"], 2.0);
        let memo = Memo::new();
        assert_eq!(opt_phy_plan(&fixtures::p1(), &c, &memo).unwrap().cost, 16.0 + 4.0 * 3.0);
        assert_eq!(opt_phy_plan(&fixtures::p2(), &c, &memo).unwrap().cost, 2.0 * 3.0 + 28.0);
    }

    #[test]
    fn physical_execution_matches_logical() {
        let db = fixtures::example_db();
        let c = Catalog::from_db(&db);
        let exec = Executor::default();
        let plan = Plan::project(
            vec![a("Emp", "did"), a("Emp", "rid")],
            Plan::join(
                vec![(a("Emp", "did"), a("Dept", "did"))],
                Plan::select(eq_const("Emp", "rid", 1), Plan::scan("Emp")),
                Plan::select(eq_const("Dept", "dname", "R&D"), Plan::scan("Dept")),
            ),
        );
        let phys = opt_phy_plan(&plan, &c, &Memo::new()).unwrap();
        assert_eq!(phys.physical.jobs[0].pattern, Pattern::SelectJoin);
        let (fused, fused_cost) = execute_physical(&db, &phys.physical, &exec).unwrap();
        let (logical, logical_cost) = eval_plan_extensional(&db, &plan, &exec).unwrap();
        assert!(marginals_agree(&fused, &logical, 1e-12));
        assert!(fused_cost.total() < logical_cost.total());
        assert_eq!(fused_cost.ops.len(), 2);
    }
}
