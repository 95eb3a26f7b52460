//! Induced functional dependencies, the projection safety test and the
//! safe-plan generator.

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;
use std::fmt;

use crate::ops::{CmpOp, Operand};
use crate::plan::{Attr, JoinPred, Plan, PlanError, SchemaMap};
use crate::query::{ConjunctiveQuery, RelRef};
use crate::relation::Value;

/// An attribute or a relation's event attribute `R.E`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FdAttr {
    Col(Attr),
    Event(String),
}

impl fmt::Display for FdAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FdAttr::Col(a) => write!(f, "{a}"),
            FdAttr::Event(r) => write!(f, "{r}.E"),
        }
    }
}

impl From<Attr> for FdAttr {
    fn from(a: Attr) -> Self {
        FdAttr::Col(a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fd {
    pub lhs: BTreeSet<FdAttr>,
    pub rhs: BTreeSet<FdAttr>,
}

impl Fd {
    pub fn new(lhs: impl IntoIterator<Item = FdAttr>, rhs: impl IntoIterator<Item = FdAttr>) -> Self {
        Self { lhs: lhs.into_iter().collect(), rhs: rhs.into_iter().collect() }
    }

    fn attrs(&self) -> impl Iterator<Item = &FdAttr> {
        self.lhs.iter().chain(&self.rhs)
    }
}

impl fmt::Display for Fd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |s: &BTreeSet<FdAttr>| s.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{{{}}}->{{{}}}", side(&self.lhs), side(&self.rhs))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FdSet {
    pub fds: Vec<Fd>,
}

impl FdSet {
    pub fn new(fds: Vec<Fd>) -> Self {
        Self { fds }
    }

    pub fn contains(&self, fd: &Fd) -> bool {
        self.fds.contains(fd)
    }

    fn push(&mut self, fd: Fd) {
        if !self.fds.contains(&fd) {
            self.fds.push(fd);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SafetyError {
    #[error("No safe plan exists")]
    NoSafePlan,
    #[error("dependency {fd} mentions `{attr}` outside the query's relations")]
    DanglingAttribute { fd: String, attr: String },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn event_fd(r: &RelRef) -> Fd {
    Fd::new([FdAttr::Event(r.name.clone())], r.attrs.iter().map(|a| FdAttr::Col(Attr::new(r.name.clone(), a.clone()))))
}

/// Γ(q): the base dependencies, `A→B` and `B→A` for each join predicate,
/// `∅→A` for each constant selection, and `R.E→Attr(R)` for each relation.
pub fn induced_fds(q: &ConjunctiveQuery, base: &FdSet) -> Result<FdSet, SafetyError> {
    let mut out = FdSet::default();
    for fd in &base.fds {
        for a in fd.attrs() {
            let known = match a {
                FdAttr::Col(c) => q.has_attr(c),
                FdAttr::Event(r) => q.rels.iter().any(|x| &x.name == r),
            };
            if !known {
                return Err(SafetyError::DanglingAttribute { fd: fd.to_string(), attr: a.to_string() });
            }
        }
        out.push(fd.clone());
    }
    for (a, b) in &q.join_preds {
        out.push(Fd::new([a.clone().into()], [b.clone().into()]));
        out.push(Fd::new([b.clone().into()], [a.clone().into()]));
    }
    for (a, _) in &q.sel_preds {
        out.push(Fd::new([], [a.clone().into()]));
    }
    for r in &q.rels {
        out.push(event_fd(r));
    }
    Ok(out)
}

/// Base dependencies that only mention the given relations.
pub fn restrict_fds(base: &FdSet, rels: &[&str]) -> FdSet {
    let inside = |a: &FdAttr| match a {
        FdAttr::Col(c) => rels.contains(&c.rel.as_str()),
        FdAttr::Event(r) => rels.contains(&r.as_str()),
    };
    FdSet::new(base.fds.iter().filter(|fd| fd.attrs().all(inside)).cloned().collect())
}

/// Least set containing `attrs` and closed under `fds`.
pub fn attr_closure(attrs: &BTreeSet<FdAttr>, fds: &FdSet) -> BTreeSet<FdAttr> {
    let mut out = attrs.clone();
    loop {
        let before = out.len();
        for fd in &fds.fds {
            if fd.lhs.is_subset(&out) {
                out.extend(fd.rhs.iter().cloned());
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

/// Whether projecting `q` onto `attrs` preserves extensional correctness:
/// for every relation R, `attrs ∪ {R.E}` must determine Head(q).
pub fn is_safe_project(attrs: &[Attr], q: &ConjunctiveQuery, fds: &FdSet) -> bool {
    let head: BTreeSet<FdAttr> = q.head.iter().cloned().map(FdAttr::Col).collect();
    q.rels.iter().all(|r| {
        let mut start: BTreeSet<FdAttr> = attrs.iter().cloned().map(FdAttr::Col).collect();
        start.insert(FdAttr::Event(r.name.clone()));
        head.is_subset(&attr_closure(&start, fds))
    })
}

/// The conjunctive query a plan computes, with Head = the plan's output.
/// Selections comparing two attributes become join predicates; other
/// non-equality selections add no dependencies and are dropped.
pub fn subquery_of(plan: &Plan, schemas: &SchemaMap) -> Result<ConjunctiveQuery, PlanError> {
    let head = plan.output_attrs(schemas)?;
    let rels = plan
        .relations()
        .into_iter()
        .map(|r| RelRef { name: r.to_string(), attrs: schemas[r].clone() })
        .collect();
    let mut q = ConjunctiveQuery { rels, head, join_preds: vec![], sel_preds: vec![] };
    plan.visit(&mut |p| match p {
        Plan::Join(preds, ..) => q.join_preds.extend(preds.iter().cloned()),
        Plan::Select(c, _) if c.op == CmpOp::Eq => match &c.right {
            Operand::Attr(b) => q.join_preds.push((c.left.clone(), b.clone())),
            Operand::Const(v) => q.sel_preds.push((c.left.clone(), v.clone())),
        },
        _ => {}
    });
    Ok(q)
}

/// Project-safety test with a memo keyed on the projection and the
/// normalized subquery below it, so plans sharing subtrees up to join order
/// are checked once.
pub struct SafetyChecker<'a> {
    schemas: &'a SchemaMap,
    base: &'a FdSet,
    memo: Mutex<HashMap<ProjectKey, bool>>,
}

type ProjectKey = (BTreeSet<Attr>, BTreeSet<Attr>, BTreeSet<String>, BTreeSet<(Attr, Attr)>, BTreeSet<(Attr, Value)>);

impl<'a> SafetyChecker<'a> {
    pub fn new(schemas: &'a SchemaMap, base: &'a FdSet) -> Self {
        Self { schemas, base, memo: Mutex::new(HashMap::new()) }
    }

    fn project_is_safe(&self, attrs: &[Attr], child: &Plan) -> Result<bool, SafetyError> {
        let sub = subquery_of(child, self.schemas)?;
        let key = (
            attrs.iter().cloned().collect(),
            sub.head.iter().cloned().collect(),
            sub.rels.iter().map(|r| r.name.clone()).collect(),
            sub.join_preds.iter().map(|(a, b)| if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) }).collect(),
            sub.sel_preds.iter().cloned().collect(),
        );
        if let Some(&safe) = self.memo.lock().unwrap().get(&key) {
            return Ok(safe);
        }
        let fds = induced_fds(&sub, &restrict_fds(self.base, &sub.rel_names()))?;
        let safe = is_safe_project(attrs, &sub, &fds);
        self.memo.lock().unwrap().insert(key, safe);
        Ok(safe)
    }

    /// Project nodes of `plan` that fail the safety test, outermost first.
    pub fn unsafe_projections(&self, plan: &Plan) -> Result<Vec<Plan>, SafetyError> {
        plan.output_attrs(self.schemas)?;
        let mut nodes = Vec::new();
        plan.visit(&mut |p| {
            if let Plan::Project(attrs, child) = p {
                nodes.push((p, attrs, child));
            }
        });
        let mut out = Vec::new();
        for (node, attrs, child) in nodes {
            if !self.project_is_safe(attrs, child)? {
                out.push(node.clone());
            }
        }
        Ok(out)
    }

    pub fn is_safe(&self, plan: &Plan) -> Result<bool, SafetyError> {
        plan.output_attrs(self.schemas)?;
        let mut nodes = Vec::new();
        plan.visit(&mut |p| {
            if let Plan::Project(attrs, child) = p {
                nodes.push((attrs, child));
            }
        });
        for (attrs, child) in nodes {
            if !self.project_is_safe(attrs, child)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Project nodes of `plan` that fail the safety test, outermost first.
pub fn unsafe_projections(plan: &Plan, schemas: &SchemaMap, base: &FdSet) -> Result<Vec<Plan>, SafetyError> {
    SafetyChecker::new(schemas, base).unsafe_projections(plan)
}

pub fn plan_is_safe(plan: &Plan, schemas: &SchemaMap, base: &FdSet) -> Result<bool, SafetyError> {
    SafetyChecker::new(schemas, base).is_safe(plan)
}

/// A safe plan for `q`, or [`SafetyError::NoSafePlan`].
pub fn safe_plan(q: &ConjunctiveQuery, base: &FdSet) -> Result<Plan, SafetyError> {
    induced_fds(q, base)?;
    plan_for(q, base)
}

fn plan_for(q: &ConjunctiveQuery, base: &FdSet) -> Result<Plan, SafetyError> {
    let all = q.attrs();
    let head: BTreeSet<&Attr> = q.head.iter().collect();
    if all.iter().all(|a| head.contains(a)) {
        return Ok(canonical_join(q));
    }
    let fds = induced_fds(q, &restrict_fds(base, &q.rel_names()))?;
    for a in all.iter().filter(|a| !head.contains(a)) {
        let mut wider = q.clone();
        wider.head.push(a.clone());
        if is_safe_project(&q.head, &wider, &fds) {
            return Ok(Plan::project(q.head.clone(), plan_for(&wider, base)?));
        }
    }
    let (q1, q2, cross) = split(q).ok_or(SafetyError::NoSafePlan)?;
    Ok(Plan::join(cross, plan_for(&q1, base)?, plan_for(&q2, base)?))
}

/// Separates Rels(q) into connected components, linking two relations when
/// a join predicate between them mentions an attribute outside Head(q).
/// The last component becomes the right input.
fn split(q: &ConjunctiveQuery) -> Option<(ConjunctiveQuery, ConjunctiveQuery, Vec<JoinPred>)> {
    let names = q.rel_names();
    let mut comp: Vec<usize> = (0..names.len()).collect();
    let pos = |r: &str| names.iter().position(|n| *n == r).unwrap();
    loop {
        let mut changed = false;
        for (a, b) in &q.join_preds {
            if q.head.contains(a) && q.head.contains(b) {
                continue;
            }
            let (i, j) = (pos(&a.rel), pos(&b.rel));
            let low = comp[i].min(comp[j]);
            if comp[i] != low || comp[j] != low {
                let (ci, cj) = (comp[i], comp[j]);
                for c in comp.iter_mut().filter(|c| **c == ci || **c == cj) {
                    *c = low;
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let last = *comp.iter().max().unwrap();
    if comp.iter().all(|&c| c == last) {
        return None;
    }
    let right: BTreeSet<&str> = names.iter().zip(&comp).filter(|(_, &c)| c == last).map(|(n, _)| *n).collect();
    let part = |want_right: bool| {
        let inside = |a: &Attr| right.contains(a.rel.as_str()) == want_right;
        ConjunctiveQuery {
            rels: q.rels.iter().filter(|r| right.contains(r.name.as_str()) == want_right).cloned().collect(),
            head: q.head.iter().filter(|a| inside(a)).cloned().collect(),
            join_preds: q.join_preds.iter().filter(|(a, b)| inside(a) && inside(b)).cloned().collect(),
            sel_preds: q.sel_preds.iter().filter(|(a, _)| inside(a)).cloned().collect(),
        }
    };
    let cross = q
        .join_preds
        .iter()
        .filter(|(a, b)| right.contains(a.rel.as_str()) != right.contains(b.rel.as_str()))
        .map(|(a, b)| if right.contains(a.rel.as_str()) { (b.clone(), a.clone()) } else { (a.clone(), b.clone()) })
        .collect();
    Some((part(false), part(true), cross))
}

/// Left-deep join of Rels(q) in declaration order. Constant selections and
/// same-relation comparisons sit on the scans; each join predicate goes on
/// the first join where both of its relations are available.
pub fn canonical_join(q: &ConjunctiveQuery) -> Plan {
    let leaf = |r: &RelRef| {
        let mut p = Plan::scan(r.name.clone());
        for (a, v) in q.sel_preds.iter().filter(|(a, _)| a.rel == r.name) {
            p = Plan::select(crate::plan::Cond::new(a.clone(), CmpOp::Eq, Operand::Const(v.clone())), p);
        }
        for (a, b) in q.join_preds.iter().filter(|(a, b)| a.rel == r.name && b.rel == r.name) {
            p = Plan::select(crate::plan::Cond::new(a.clone(), CmpOp::Eq, Operand::Attr(b.clone())), p);
        }
        p
    };
    let mut plan = leaf(&q.rels[0]);
    let mut seen: Vec<&str> = vec![&q.rels[0].name];
    for r in &q.rels[1..] {
        let preds = q
            .join_preds
            .iter()
            .filter_map(|(a, b)| {
                if seen.contains(&a.rel.as_str()) && b.rel == r.name {
                    Some((a.clone(), b.clone()))
                } else if seen.contains(&b.rel.as_str()) && a.rel == r.name {
                    Some((b.clone(), a.clone()))
                } else {
                    None
                }
            })
            .collect();
        plan = Plan::join(preds, plan, leaf(r));
        seen.push(&r.name);
    }
    plan
}
