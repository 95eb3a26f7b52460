//! Tuple-independent probabilistic databases: possible worlds, the
//! brute-force marginal oracle, and plan evaluation.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{CostCounters, Engine};
use crate::lineage::{formula_probability, Dnf, Event, LineageError};
use crate::ops::{op_join, op_select, select_project_or_exists, Executor};
use crate::plan::{Attr, Plan, PlanError, SchemaMap};
use crate::query::ConjunctiveQuery;
use crate::relation::{ProbTuple, RelError, Relation, Schema, Value};

pub const DEFAULT_WORLD_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbError {
    #[error(transparent)]
    Relation(#[from] RelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Lineage(#[from] LineageError),
    #[error("relation `{0}` defined twice")]
    DuplicateRelation(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("{relation}: tuple lineage {lineage} is not a single event")]
    NotBase { relation: String, lineage: String },
    #[error("event `{0}` labels more than one tuple")]
    DuplicateEvent(Event),
    #[error("{tuples} tuples give 2^{tuples} worlds; the limit is {limit} tuples")]
    TooManyTuples { tuples: usize, limit: usize },
    #[error("query references `{0}` which the database does not have")]
    UnknownAttribute(Attr),
}

/// Named base relations whose tuples are independent events.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDatabase {
    relations: Vec<Relation>,
    events: BTreeMap<Event, f64>,
}

impl ProbDatabase {
    pub fn new(relations: impl IntoIterator<Item = Relation>) -> Result<Self, ProbError> {
        let mut out: Vec<Relation> = Vec::new();
        let mut events = BTreeMap::new();
        for r in relations {
            if out.iter().any(|o| o.schema.name == r.schema.name) {
                return Err(ProbError::DuplicateRelation(r.schema.name.clone()));
            }
            for t in &r.tuples {
                let vars = t.lineage.variables();
                let event = match (vars.len(), t.lineage.conjuncts().len()) {
                    (1, 1) => vars.into_iter().next().unwrap(),
                    _ => {
                        return Err(ProbError::NotBase {
                            relation: r.schema.name.clone(),
                            lineage: t.lineage.to_string(),
                        })
                    }
                };
                if events.insert(event.clone(), t.prob).is_some() {
                    return Err(ProbError::DuplicateEvent(event));
                }
            }
            out.push(r);
        }
        Ok(Self { relations: out, events })
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.schema.name == name)
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn schemas(&self) -> SchemaMap {
        self.relations.iter().map(|r| (r.schema.name.clone(), r.schema.attrs.clone())).collect()
    }

    pub fn events(&self) -> &BTreeMap<Event, f64> {
        &self.events
    }

    pub fn num_tuples(&self) -> usize {
        self.events.len()
    }

    /// Every tuple's event and probability, relation by relation.
    pub fn tuple_events(&self) -> Vec<(Event, f64)> {
        self.relations
            .iter()
            .flat_map(|r| r.tuples.iter().map(|t| (t.lineage.variables().into_iter().next().unwrap(), t.prob)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PossibleWorld {
    pub present: BTreeSet<Event>,
    pub prob: f64,
}

fn world_prob(mask: u64, probs: &[f64]) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| if mask >> i & 1 == 1 { *p } else { 1.0 - p })
        .product()
}

/// All 2^n worlds, in bitmask order over [`ProbDatabase::tuple_events`].
pub fn enumerate_worlds(db: &ProbDatabase, limit: usize) -> Result<impl Iterator<Item = PossibleWorld>, ProbError> {
    let tuples = db.tuple_events();
    check_limit(tuples.len(), limit)?;
    let probs: Vec<f64> = tuples.iter().map(|(_, p)| *p).collect();
    Ok((0..1u64 << tuples.len()).map(move |mask| PossibleWorld {
        present: tuples
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, (e, _))| e.clone())
            .collect(),
        prob: world_prob(mask, &probs),
    }))
}

fn check_limit(tuples: usize, limit: usize) -> Result<(), ProbError> {
    if tuples > limit.min(63) {
        return Err(ProbError::TooManyTuples { tuples, limit });
    }
    Ok(())
}

/// For each answer of `q` over the full database, the bitmasks of the tuple
/// combinations that produce it. An answer is in a world iff one of its
/// masks is a subset of the world.
fn witnesses(db: &ProbDatabase, q: &ConjunctiveQuery) -> Result<BTreeMap<Vec<Value>, Vec<u64>>, ProbError> {
    let mut offsets = BTreeMap::new();
    let mut offset = 0;
    for r in db.relations() {
        offsets.insert(r.schema.name.as_str(), offset);
        offset += r.len();
    }
    let rels: Vec<&Relation> = q
        .rels
        .iter()
        .map(|r| db.relation(&r.name).ok_or_else(|| ProbError::UnknownRelation(r.name.clone())))
        .collect::<Result<_, _>>()?;
    // (position in q.rels, column)
    let locate = |a: &Attr| -> Result<(usize, usize), ProbError> {
        let pos = q.rels.iter().position(|r| r.name == a.rel).ok_or_else(|| ProbError::UnknownAttribute(a.clone()))?;
        let col = rels[pos].schema.index(&a.name).map_err(|_| ProbError::UnknownAttribute(a.clone()))?;
        Ok((pos, col))
    };
    let head = q.head.iter().map(locate).collect::<Result<Vec<_>, _>>()?;
    let joins = q
        .join_preds
        .iter()
        .map(|(a, b)| Ok((locate(a)?, locate(b)?)))
        .collect::<Result<Vec<_>, ProbError>>()?;
    let sels = q
        .sel_preds
        .iter()
        .map(|(a, v)| Ok((locate(a)?, v.clone())))
        .collect::<Result<Vec<_>, ProbError>>()?;

    let mut out: BTreeMap<Vec<Value>, Vec<u64>> = BTreeMap::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(rels.len());
    let ctx = WitnessSearch { rels: &rels, offsets: rels.iter().map(|r| offsets[r.schema.name.as_str()]).collect(), head, joins, sels };
    ctx.search(&mut chosen, &mut out);
    Ok(out)
}

struct WitnessSearch<'a> {
    rels: &'a [&'a Relation],
    offsets: Vec<usize>,
    head: Vec<(usize, usize)>,
    joins: Vec<((usize, usize), (usize, usize))>,
    sels: Vec<((usize, usize), Value)>,
}

impl WitnessSearch<'_> {
    fn value(&self, chosen: &[usize], (rel, col): (usize, usize)) -> &Value {
        &self.rels[rel].tuples[chosen[rel]].values[col]
    }

    /// Backtracks over relations in query order, checking each predicate as
    /// soon as all its relations are bound.
    fn search(&self, chosen: &mut Vec<usize>, out: &mut BTreeMap<Vec<Value>, Vec<u64>>) {
        let depth = chosen.len();
        if depth == self.rels.len() {
            let key = self.head.iter().map(|&h| self.value(chosen, h).clone()).collect();
            let mask = chosen.iter().enumerate().fold(0u64, |m, (r, &t)| m | 1 << (self.offsets[r] + t));
            out.entry(key).or_default().push(mask);
            return;
        }
        for t in 0..self.rels[depth].len() {
            chosen.push(t);
            let ok = self.sels.iter().filter(|((r, _), _)| *r == depth).all(|(a, v)| self.value(chosen, *a) == v)
                && self
                    .joins
                    .iter()
                    .filter(|(a, b)| a.0.max(b.0) == depth)
                    .all(|(a, b)| self.value(chosen, *a) == self.value(chosen, *b));
            if ok {
                self.search(chosen, out);
            }
            chosen.pop();
        }
    }
}

/// Worlds summed per task by the oracle.
const WORLDS_PER_TASK: u64 = 1 << 12;

/// Marginal probability of every possible answer of `q`, by summing the
/// probabilities of the worlds whose answer contains it. Sorted by
/// probability descending, then by values.
pub fn oracle_marginals(
    db: &ProbDatabase,
    q: &ConjunctiveQuery,
    engine: &Engine,
    limit: usize,
) -> Result<Relation, ProbError> {
    let tuples = db.tuple_events();
    check_limit(tuples.len(), limit)?;
    let answers: Vec<(Vec<Value>, Vec<u64>)> = witnesses(db, q)?.into_iter().collect();
    let probs: Vec<f64> = tuples.iter().map(|(_, p)| *p).collect();
    let worlds = 1u64 << tuples.len();
    let starts: Vec<u64> = (0..worlds).step_by(WORLDS_PER_TASK as usize).collect();
    let partials = engine.run_tasks(starts, |_, start| {
        let mut sums = vec![0.0; answers.len()];
        for mask in start..(start + WORLDS_PER_TASK).min(worlds) {
            let mut p = None;
            for (i, (_, masks)) in answers.iter().enumerate() {
                if masks.iter().any(|m| m & mask == *m) {
                    sums[i] += *p.get_or_insert_with(|| world_prob(mask, &probs));
                }
            }
        }
        sums
    });
    let mut totals = vec![0.0; answers.len()];
    for part in partials {
        for (t, s) in totals.iter_mut().zip(part) {
            *t += s;
        }
    }
    let mut rows: Vec<ProbTuple> = answers
        .into_iter()
        .zip(totals)
        .map(|((values, masks), prob)| {
            let lineage = masks.iter().fold(Dnf::falsity(), |acc, m| {
                let conj = (0..tuples.len()).filter(|i| m >> i & 1 == 1).map(|i| tuples[i].0.clone());
                acc.or(&Dnf::from_conjuncts([conj]))
            });
            ProbTuple { values, prob: prob.clamp(0.0, 1.0), lineage }
        })
        .collect();
    rows.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.values.cmp(&b.values)));
    let schema = Schema::new("q", q.head.iter().map(|a| a.to_string()).collect())?;
    Ok(Relation::new(schema, rows)?)
}

/// One operator run during plan evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpCost {
    pub op: &'static str,
    pub node: String,
    pub counters: CostCounters,
}

/// Measured communication cost of a plan, one entry per operator job.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanCost {
    pub ops: Vec<OpCost>,
}

impl PlanCost {
    pub fn total(&self) -> u64 {
        self.ops.iter().map(|o| o.counters.total()).sum()
    }
}

/// A scanned relation with `Rel.attr` column names.
pub fn qualified(r: &Relation) -> Result<Relation, RelError> {
    let attrs = r.schema.attrs.iter().map(|a| Attr::new(r.schema.name.clone(), a.clone()).to_string()).collect();
    Relation::new(Schema::new(r.schema.name.clone(), attrs)?, r.tuples.clone())
}

/// Evaluates `plan` with the operators' extensional probability rules.
/// Output columns are named `Rel.attr`. The result equals the oracle's
/// marginals when the plan is safe.
pub fn eval_plan_extensional(db: &ProbDatabase, plan: &Plan, exec: &Executor) -> Result<(Relation, PlanCost), ProbError> {
    plan.output_attrs(&db.schemas())?;
    let mut cost = PlanCost::default();
    let out = eval(db, plan, exec, &mut cost)?;
    Ok((out, cost))
}

fn eval(db: &ProbDatabase, plan: &Plan, exec: &Executor, cost: &mut PlanCost) -> Result<Relation, ProbError> {
    let (op, (out, counters)) = match plan {
        Plan::Scan(name) => {
            let r = db.relation(name).ok_or_else(|| ProbError::UnknownRelation(name.clone()))?;
            return Ok(qualified(r)?);
        }
        Plan::Select(cond, child) => {
            let input = eval(db, child, exec, cost)?;
            ("select", op_select(exec, &input, &cond.map(|a| a.to_string()))?)
        }
        Plan::Project(attrs, child) => {
            let input = eval(db, child, exec, cost)?;
            let names: Vec<String> = attrs.iter().map(|a| a.to_string()).collect();
            ("project", select_project_or_exists(exec, &input, &[], &names)?)
        }
        Plan::Join(preds, l, r) => {
            let left = eval(db, l, exec, cost)?;
            let right = eval(db, r, exec, cost)?;
            let on: Vec<(String, String)> = preds.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
            ("join", op_join(exec, &left, &right, Some(&on))?)
        }
    };
    cost.ops.push(OpCost { op, node: plan.to_string(), counters });
    Ok(out)
}

/// Result tuples of a plan with their lineage formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceResult {
    pub attrs: Vec<String>,
    pub rows: Vec<(Vec<Value>, Dnf)>,
}

impl ProvenanceResult {
    pub fn formula(&self, values: &[Value]) -> Option<&Dnf> {
        self.rows.iter().find(|(v, _)| v == values).map(|(_, f)| f)
    }

    /// Exact probability of each row's formula.
    pub fn marginals(&self, db: &ProbDatabase, variable_limit: usize) -> Result<Relation, ProbError> {
        let tuples = self
            .rows
            .iter()
            .map(|(values, f)| {
                Ok(ProbTuple {
                    values: values.clone(),
                    prob: formula_probability(f, db.events(), variable_limit)?,
                    lineage: f.clone(),
                })
            })
            .collect::<Result<Vec<_>, ProbError>>()?;
        Ok(Relation::new(Schema::new("q", self.attrs.clone())?, tuples)?)
    }
}

/// Evaluates `plan` tracking only lineage: selections keep formulas, joins
/// conjoin them, projections disjoin them.
pub fn eval_plan_with_provenance(
    db: &ProbDatabase,
    plan: &Plan,
    exec: &Executor,
) -> Result<(ProvenanceResult, PlanCost), ProbError> {
    let (r, cost) = eval_plan_extensional(db, plan, exec)?;
    let rows = r.tuples.into_iter().map(|t| (t.values, t.lineage)).collect();
    Ok((ProvenanceResult { attrs: r.schema.attrs, rows }, cost))
}

/// Same answers with probabilities within `tol`, ignoring column and row
/// order.
pub fn marginals_agree(a: &Relation, b: &Relation, tol: f64) -> bool {
    let (ra, rb) = (a.canonical_rows(), b.canonical_rows());
    ra.len() == rb.len() && ra.iter().zip(&rb).all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    fn oracle(db: &ProbDatabase, q: &ConjunctiveQuery) -> Relation {
        oracle_marginals(db, q, &Engine::sequential(), DEFAULT_WORLD_LIMIT).unwrap()
    }

    #[test]
    fn full_world_of_example_db() {
        let db = fixtures::example_db();
        let worlds: Vec<PossibleWorld> = enumerate_worlds(&db, 20).unwrap().collect();
        assert_eq!(worlds.len(), 128);
        let full = worlds.iter().find(|w| w.present.len() == 7).unwrap();
        assert!(close(full.prob, 0.00216));
        assert!(close(worlds.iter().map(|w| w.prob).sum::<f64>(), 1.0));
    }

    #[test]
    fn tiny_world_sets() {
        let empty = ProbDatabase::new([]).unwrap();
        let worlds: Vec<_> = enumerate_worlds(&empty, 20).unwrap().collect();
        assert_eq!(worlds, vec![PossibleWorld { present: BTreeSet::new(), prob: 1.0 }]);
        let two = ProbDatabase::new([Relation::base("R", &["a"], vec![(vec![1.into()], 0.5), (vec![2.into()], 0.5)]).unwrap()])
            .unwrap();
        let probs: Vec<f64> = enumerate_worlds(&two, 20).unwrap().map(|w| w.prob).collect();
        assert_eq!(probs, vec![0.25; 4]);
    }

    #[test]
    fn world_limit_is_named() {
        let db = fixtures::example_db();
        let err = enumerate_worlds(&db, 6).err().unwrap();
        assert_eq!(err, ProbError::TooManyTuples { tuples: 7, limit: 6 });
        assert!(err.to_string().contains("limit is 6"));
        let q = fixtures::q_e();
        assert!(oracle_marginals(&db, &q, &Engine::sequential(), 6).is_err());
    }

    #[test]
    fn oracle_on_q_e() {
        let db = fixtures::example_db();
        let r = oracle(&db, &fixtures::q_e());
        assert_eq!(r.schema.attrs, vec!["Emp.did", "Emp.rid"]);
        assert_eq!(r.len(), 2);
        assert_eq!(r.tuples[0].values, vec![Value::Int(1), Value::Int(1)]);
        assert!(close(r.tuples[0].prob, 0.24));
        assert!(close(r.prob_of(&[2.into(), 1.into()]).unwrap(), 0.08));
        assert!(r.tuples.iter().all(|t| !close(t.prob, 0.016)));
    }

    #[test]
    fn oracle_single_relation_is_identity() {
        let db = fixtures::example_db();
        let q = crate::query::parse_query("SELECT did, dname FROM Dept", &db.schemas()).unwrap();
        let r = oracle(&db, &q);
        assert!(close(r.prob_of(&[1.into(), "R&D".into()]).unwrap(), 0.5));
        assert!(close(r.prob_of(&[2.into(), "Sales".into()]).unwrap(), 0.2));
    }

    #[test]
    fn oracle_parallel_matches_sequential() {
        let db = fixtures::example_db();
        let q = fixtures::q_e();
        let par = oracle_marginals(&db, &q, &Engine::new(4).unwrap(), 20).unwrap();
        assert_eq!(par, oracle(&db, &q));
    }

    #[test]
    fn unsafe_and_safe_plans() {
        let db = fixtures::example_db();
        let exec = Executor::default();
        let (p1, _) = eval_plan_extensional(&db, &fixtures::p1(), &exec).unwrap();
        assert!(close(p1.prob_of(&[1.into(), 1.into()]).unwrap(), 0.34125));
        let (p2, cost) = eval_plan_extensional(&db, &fixtures::p2(), &exec).unwrap();
        assert!(close(p2.prob_of(&[1.into(), 1.into()]).unwrap(), 0.24));
        assert!(close(p2.prob_of(&[2.into(), 1.into()]).unwrap(), 0.08));
        assert_eq!(cost.ops.len(), 6);
        let o = oracle(&db, &fixtures::q_e());
        assert!(marginals_agree(&p2, &o, 1e-9));
        assert!(!marginals_agree(&p1, &o, 1e-9));
    }

    #[test]
    fn scan_is_the_relation() {
        let db = fixtures::example_db();
        let (r, cost) = eval_plan_extensional(&db, &Plan::scan("Dept"), &Executor::default()).unwrap();
        assert_eq!(r.tuples, db.relation("Dept").unwrap().tuples);
        assert_eq!(cost.total(), 0);
        assert!(matches!(
            eval_plan_extensional(&db, &Plan::scan("Nope"), &Executor::default()),
            Err(ProbError::Plan(PlanError::UnknownRelation(_)))
        ));
    }

    #[test]
    fn provenance_of_q_e() {
        let db = fixtures::example_db();
        for plan in [fixtures::p1(), fixtures::p2()] {
            let (prov, _) = eval_plan_with_provenance(&db, &plan, &Executor::default()).unwrap();
            let f = prov.formula(&[1.into(), 1.into()]).unwrap();
            assert_eq!(f, &Dnf::from_conjuncts([["d1", "r1", "e1"], ["d1", "r1", "e2"]]));
            assert_eq!(f.to_string(), "(d1∧e1∧r1)∨(d1∧e2∧r1)");
            assert_eq!(prov.formula(&[2.into(), 1.into()]).unwrap(), &Dnf::from_conjuncts([["d2", "r1", "e3"]]));
            let m = prov.marginals(&db, 24).unwrap();
            assert!(marginals_agree(&m, &oracle(&db, &fixtures::q_e()), 1e-9));
        }
        let (leaf, _) = eval_plan_with_provenance(&db, &Plan::scan("Rank"), &Executor::default()).unwrap();
        assert_eq!(leaf.rows[1].1, Dnf::literal("r2"));
    }

    #[test]
    fn database_validation() {
        let r = Relation::base_with_events("R", &["a"], vec![("x".into(), vec![1.into()], 0.5)]).unwrap();
        let s = Relation::base_with_events("S", &["a"], vec![("x".into(), vec![1.into()], 0.5)]).unwrap();
        assert_eq!(ProbDatabase::new([r.clone(), s]), Err(ProbError::DuplicateEvent("x".into())));
        assert_eq!(ProbDatabase::new([r.clone(), r]), Err(ProbError::DuplicateRelation("R".into())));
    }
}
