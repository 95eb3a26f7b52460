//! Equivalence laws over logical plans.
//!
//! | law | rewrite |
//! |-----|---------|
//! | 1 | `σc(R ⋈ S) ⇔ σc(R) ⋈ S` |
//! | 2 | `σc(ΠA(R)) ⇔ ΠA(σc(R))` |
//! | 3 | `R ⋈ S ⇔ S ⋈ R` |
//! | 4 | `(R ⋈ S) ⋈ T ⇔ R ⋈ (S ⋈ T)` |
//! | 5 | `ΠA(ΠB(R)) ⇒ ΠA(R)` |
//! | 6 | `ΠA(R ⋈ S) ⇒ ΠA∩R(R) ⋈ ΠA∩S(S)` when A holds every join attribute |
//! | 7 | `ΠA(R) ⋈ S ⇒ ΠA∪Attr(S)(R ⋈ S)` |

use std::collections::{BTreeSet, HashSet, VecDeque};

use crate::plan::{Attr, JoinPred, Plan, SchemaMap};
use crate::safety::{FdSet, SafetyChecker};
#[cfg(test)]
use crate::safety::plan_is_safe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Law {
    PushSelectBelowJoin,
    LiftSelectAboveJoin,
    PushSelectBelowProject,
    LiftSelectAboveProject,
    CommuteJoin,
    AssociateRight,
    AssociateLeft,
    CascadeProject,
    PushProjectBelowJoin,
    LiftProjectAboveJoin,
}

impl Law {
    pub const SURE: [Law; 3] = [Law::PushSelectBelowJoin, Law::PushSelectBelowProject, Law::CascadeProject];

    pub const ALL: [Law; 10] = [
        Law::PushSelectBelowJoin,
        Law::LiftSelectAboveJoin,
        Law::PushSelectBelowProject,
        Law::LiftSelectAboveProject,
        Law::CommuteJoin,
        Law::AssociateRight,
        Law::AssociateLeft,
        Law::CascadeProject,
        Law::PushProjectBelowJoin,
        Law::LiftProjectAboveJoin,
    ];

    /// Number of the law in the table above.
    pub fn number(self) -> u8 {
        match self {
            Law::PushSelectBelowJoin | Law::LiftSelectAboveJoin => 1,
            Law::PushSelectBelowProject | Law::LiftSelectAboveProject => 2,
            Law::CommuteJoin => 3,
            Law::AssociateRight | Law::AssociateLeft => 4,
            Law::CascadeProject => 5,
            Law::PushProjectBelowJoin => 6,
            Law::LiftProjectAboveJoin => 7,
        }
    }
}

fn outputs(p: &Plan, schemas: &SchemaMap) -> BTreeSet<Attr> {
    p.output_attrs(schemas).map(|v| v.into_iter().collect()).unwrap_or_default()
}

fn ordered(p: &Plan, schemas: &SchemaMap) -> Vec<Attr> {
    p.output_attrs(schemas).unwrap_or_default()
}

/// Orients each predicate so its left attribute comes from `left`.
fn orient(preds: impl IntoIterator<Item = JoinPred>, left: &BTreeSet<&str>) -> Vec<JoinPred> {
    preds.into_iter().map(|(a, b)| if left.contains(b.rel.as_str()) { (b, a) } else { (a, b) }).collect()
}

/// Rewrites of `p` by `law` applied at the root.
pub fn rewrite_root(p: &Plan, law: Law, schemas: &SchemaMap) -> Vec<Plan> {
    let mut out = Vec::new();
    match (law, p) {
        (Law::PushSelectBelowJoin, Plan::Select(c, child)) => {
            if let Plan::Join(preds, l, r) = &**child {
                let attrs: BTreeSet<Attr> = c.attrs().into_iter().cloned().collect();
                if attrs.is_subset(&outputs(l, schemas)) {
                    out.push(Plan::join(preds.clone(), Plan::select(c.clone(), (**l).clone()), (**r).clone()));
                } else if attrs.is_subset(&outputs(r, schemas)) {
                    out.push(Plan::join(preds.clone(), (**l).clone(), Plan::select(c.clone(), (**r).clone())));
                }
            }
        }
        (Law::LiftSelectAboveJoin, Plan::Join(preds, l, r)) => {
            if let Plan::Select(c, inner) = &**l {
                out.push(Plan::select(c.clone(), Plan::join(preds.clone(), (**inner).clone(), (**r).clone())));
            }
            if let Plan::Select(c, inner) = &**r {
                out.push(Plan::select(c.clone(), Plan::join(preds.clone(), (**l).clone(), (**inner).clone())));
            }
        }
        (Law::PushSelectBelowProject, Plan::Select(c, child)) => {
            if let Plan::Project(attrs, inner) = &**child {
                out.push(Plan::project(attrs.clone(), Plan::select(c.clone(), (**inner).clone())));
            }
        }
        (Law::LiftSelectAboveProject, Plan::Project(attrs, child)) => {
            if let Plan::Select(c, inner) = &**child {
                if c.attrs().into_iter().all(|a| attrs.contains(a)) {
                    out.push(Plan::select(c.clone(), Plan::project(attrs.clone(), (**inner).clone())));
                }
            }
        }
        (Law::CommuteJoin, Plan::Join(preds, l, r)) => {
            let swapped = preds.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
            out.push(Plan::join(swapped, (**r).clone(), (**l).clone()));
        }
        (Law::AssociateRight, Plan::Join(p2, l, t)) => {
            if let Plan::Join(p1, r, s) = &**l {
                let r_rels: BTreeSet<&str> = r.relations().into_iter().collect();
                let s_rels: BTreeSet<&str> = s.relations().into_iter().collect();
                let all = p1.iter().chain(p2.iter()).cloned();
                let (outer, inner): (Vec<_>, Vec<_>) =
                    all.partition(|(a, b)| r_rels.contains(a.rel.as_str()) || r_rels.contains(b.rel.as_str()));
                let inner = orient(inner, &s_rels);
                let outer = orient(outer, &r_rels);
                out.push(Plan::join(outer, (**r).clone(), Plan::join(inner, (**s).clone(), (**t).clone())));
            }
        }
        (Law::AssociateLeft, Plan::Join(p2, r, right)) => {
            if let Plan::Join(p1, s, t) = &**right {
                let t_rels: BTreeSet<&str> = t.relations().into_iter().collect();
                let mut rs_rels: BTreeSet<&str> = r.relations().into_iter().collect();
                rs_rels.extend(s.relations());
                let all = p1.iter().chain(p2.iter()).cloned();
                let (outer, inner): (Vec<_>, Vec<_>) =
                    all.partition(|(a, b)| t_rels.contains(a.rel.as_str()) || t_rels.contains(b.rel.as_str()));
                let r_rels: BTreeSet<&str> = r.relations().into_iter().collect();
                let inner = orient(inner, &r_rels);
                let outer = orient(outer, &rs_rels);
                out.push(Plan::join(outer, Plan::join(inner, (**r).clone(), (**s).clone()), (**t).clone()));
            }
        }
        (Law::CascadeProject, Plan::Project(attrs, child)) => {
            if let Plan::Project(_, inner) = &**child {
                out.push(Plan::project(attrs.clone(), (**inner).clone()));
            }
        }
        (Law::PushProjectBelowJoin, Plan::Project(attrs, child)) => {
            if let Plan::Join(preds, l, r) = &**child {
                let keep: BTreeSet<&Attr> = attrs.iter().collect();
                if preds.iter().all(|(a, b)| keep.contains(a) && keep.contains(b)) {
                    let side = |s: &Plan| {
                        let outs = ordered(s, schemas);
                        let part: Vec<Attr> = attrs.iter().filter(|a| outs.contains(a)).cloned().collect();
                        if part.len() == outs.len() {
                            Some(s.clone())
                        } else if part.is_empty() {
                            None
                        } else {
                            Some(Plan::project(part, s.clone()))
                        }
                    };
                    if let (Some(nl), Some(nr)) = (side(l), side(r)) {
                        out.push(Plan::join(preds.clone(), nl, nr));
                    }
                }
            }
        }
        (Law::LiftProjectAboveJoin, Plan::Join(preds, l, r)) => {
            if let Plan::Project(attrs, inner) = &**l {
                let mut keep = attrs.clone();
                keep.extend(ordered(r, schemas));
                out.push(Plan::project(keep, Plan::join(preds.clone(), (**inner).clone(), (**r).clone())));
            }
            if let Plan::Project(attrs, inner) = &**r {
                let mut keep = ordered(l, schemas);
                keep.extend(attrs.iter().cloned());
                out.push(Plan::project(keep, Plan::join(preds.clone(), (**l).clone(), (**inner).clone())));
            }
        }
        _ => {}
    }
    out
}

/// Every plan obtained by applying one of `laws` at one node of `p`.
pub fn rewrite_anywhere(p: &Plan, laws: &[Law], schemas: &SchemaMap) -> Vec<Plan> {
    let mut out: Vec<Plan> = laws.iter().flat_map(|&law| rewrite_root(p, law, schemas)).collect();
    match p {
        Plan::Scan(_) => {}
        Plan::Select(c, child) => {
            out.extend(rewrite_anywhere(child, laws, schemas).into_iter().map(|n| Plan::select(c.clone(), n)));
        }
        Plan::Project(a, child) => {
            out.extend(rewrite_anywhere(child, laws, schemas).into_iter().map(|n| Plan::project(a.clone(), n)));
        }
        Plan::Join(preds, l, r) => {
            out.extend(
                rewrite_anywhere(l, laws, schemas).into_iter().map(|n| Plan::join(preds.clone(), n, (**r).clone())),
            );
            out.extend(
                rewrite_anywhere(r, laws, schemas).into_iter().map(|n| Plan::join(preds.clone(), (**l).clone(), n)),
            );
        }
    }
    out
}

/// The first rewrite in pre-order, trying `laws` in order at each node.
fn first_rewrite(p: &Plan, laws: &[Law], schemas: &SchemaMap) -> Option<Plan> {
    for &law in laws {
        if let Some(n) = rewrite_root(p, law, schemas).into_iter().next() {
            return Some(n);
        }
    }
    match p {
        Plan::Scan(_) => None,
        Plan::Select(c, child) => first_rewrite(child, laws, schemas).map(|n| Plan::select(c.clone(), n)),
        Plan::Project(a, child) => first_rewrite(child, laws, schemas).map(|n| Plan::project(a.clone(), n)),
        Plan::Join(preds, l, r) => first_rewrite(l, laws, schemas)
            .map(|n| Plan::join(preds.clone(), n, (**r).clone()))
            .or_else(|| first_rewrite(r, laws, schemas).map(|n| Plan::join(preds.clone(), (**l).clone(), n))),
    }
}

/// Pushes selections below joins and projections and merges stacked
/// projections until none of these apply.
pub fn apply_sure_rules(p: &Plan, schemas: &SchemaMap) -> Plan {
    let mut cur = p.clone();
    while let Some(next) = first_rewrite(&cur, &Law::SURE, schemas) {
        cur = next;
    }
    cur
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equivalents {
    /// Breadth-first discovery order; the input plan comes first.
    pub plans: Vec<Plan>,
    /// Set when the bound stopped the search before the closure was reached.
    pub truncated: bool,
}

/// Safe plans reachable from `p` by the laws, at most `bound` of them.
pub fn generate_equivalents(p: &Plan, bound: usize, schemas: &SchemaMap, base: &FdSet) -> Equivalents {
    generate_equivalents_with(p, bound, schemas, &SafetyChecker::new(schemas, base))
}

/// [`generate_equivalents`] sharing a safety memo with other searches.
pub fn generate_equivalents_with(p: &Plan, bound: usize, schemas: &SchemaMap, checker: &SafetyChecker) -> Equivalents {
    let bound = bound.max(1);
    let mut seen: HashSet<Plan> = HashSet::from([p.clone()]);
    let mut plans = vec![p.clone()];
    let mut queue = VecDeque::from([p.clone()]);
    while let Some(cur) = queue.pop_front() {
        for next in rewrite_anywhere(&cur, &Law::ALL, schemas) {
            if seen.contains(&next) {
                continue;
            }
            seen.insert(next.clone());
            if !checker.is_safe(&next).unwrap_or(false) {
                continue;
            }
            if plans.len() == bound {
                return Equivalents { plans, truncated: true };
            }
            plans.push(next.clone());
            queue.push_back(next);
        }
    }
    Equivalents { plans, truncated: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, eq_const};

    fn a(r: &str, n: &str) -> Attr {
        Attr::new(r, n)
    }

    fn schemas() -> SchemaMap {
        [("R", vec!["a", "b"]), ("S", vec!["b", "c"]), ("T", vec!["c", "d"])]
            .into_iter()
            .map(|(r, v)| (r.to_string(), v.into_iter().map(String::from).collect()))
            .collect()
    }

    fn rs() -> Plan {
        Plan::join(vec![(a("R", "b"), a("S", "b"))], Plan::scan("R"), Plan::scan("S"))
    }

    #[test]
    fn law1_push_and_lift() {
        let s = schemas();
        let p = Plan::select(eq_const("R", "a", 1), rs());
        let pushed = Plan::join(
            vec![(a("R", "b"), a("S", "b"))],
            Plan::select(eq_const("R", "a", 1), Plan::scan("R")),
            Plan::scan("S"),
        );
        assert_eq!(apply_sure_rules(&p, &s), pushed);
        assert_eq!(rewrite_root(&pushed, Law::LiftSelectAboveJoin, &s), vec![p]);
    }

    #[test]
    fn law2_push() {
        let s = schemas();
        let p = Plan::select(eq_const("R", "a", 1), Plan::project(vec![a("R", "a")], Plan::scan("R")));
        assert_eq!(
            apply_sure_rules(&p, &s),
            Plan::project(vec![a("R", "a")], Plan::select(eq_const("R", "a", 1), Plan::scan("R")))
        );
    }

    #[test]
    fn law5_cascade() {
        let s = schemas();
        let p = Plan::project(vec![a("R", "a")], Plan::project(vec![a("R", "a"), a("R", "b")], Plan::scan("R")));
        assert_eq!(apply_sure_rules(&p, &s), Plan::project(vec![a("R", "a")], Plan::scan("R")));
    }

    #[test]
    fn law3_and_law4() {
        let s = schemas();
        let base = FdSet::default();
        let eq = generate_equivalents(&rs(), 100, &s, &base);
        assert!(eq.plans.contains(&Plan::join(vec![(a("S", "b"), a("R", "b"))], Plan::scan("S"), Plan::scan("R"))));
        let left_deep = Plan::join(vec![(a("S", "c"), a("T", "c"))], rs(), Plan::scan("T"));
        let right_deep = Plan::join(
            vec![(a("R", "b"), a("S", "b"))],
            Plan::scan("R"),
            Plan::join(vec![(a("S", "c"), a("T", "c"))], Plan::scan("S"), Plan::scan("T")),
        );
        assert_eq!(rewrite_root(&left_deep, Law::AssociateRight, &s), vec![right_deep.clone()]);
        assert_eq!(rewrite_root(&right_deep, Law::AssociateLeft, &s), vec![left_deep.clone()]);
        assert!(generate_equivalents(&left_deep, 1000, &s, &base).plans.contains(&right_deep));
    }

    #[test]
    fn nothing_applies() {
        let s = schemas();
        let eq = generate_equivalents(&Plan::scan("R"), 10, &s, &FdSet::default());
        assert_eq!(eq, Equivalents { plans: vec![Plan::scan("R")], truncated: false });
    }

    #[test]
    fn bound_truncates() {
        let s = schemas();
        let left_deep = Plan::join(vec![(a("S", "c"), a("T", "c"))], rs(), Plan::scan("T"));
        let eq = generate_equivalents(&left_deep, 3, &s, &FdSet::default());
        assert_eq!(eq.plans.len(), 3);
        assert!(eq.truncated);
    }

    #[test]
    fn law6_needs_join_attributes() {
        let s = schemas();
        let narrow = Plan::project(vec![a("R", "a")], rs());
        assert!(rewrite_root(&narrow, Law::PushProjectBelowJoin, &s).is_empty());
        let wide = Plan::project(vec![a("R", "a"), a("R", "b"), a("S", "b")], rs());
        assert_eq!(
            rewrite_root(&wide, Law::PushProjectBelowJoin, &s),
            vec![Plan::join(
                vec![(a("R", "b"), a("S", "b"))],
                Plan::scan("R"),
                Plan::project(vec![a("S", "b")], Plan::scan("S"))
            )]
        );
    }

    #[test]
    fn law7_lifts() {
        let s = schemas();
        let p = Plan::join(vec![(a("R", "b"), a("S", "b"))], Plan::project(vec![a("R", "b")], Plan::scan("R")), Plan::scan("S"));
        assert_eq!(
            rewrite_root(&p, Law::LiftProjectAboveJoin, &s),
            vec![Plan::project(vec![a("R", "b"), a("S", "b"), a("S", "c")], rs())]
        );
    }

    #[test]
    fn sure_rules_turn_safe_plan_into_p2() {
        let db = fixtures::example_db();
        let plan = crate::safety::safe_plan(&fixtures::q_e(), &FdSet::default()).unwrap();
        assert_eq!(apply_sure_rules(&plan, &db.schemas()), fixtures::p2());
    }

    #[test]
    fn equivalents_are_safe() {
        let db = fixtures::example_db();
        let s = db.schemas();
        let eq = generate_equivalents(&fixtures::p2(), 500, &s, &FdSet::default());
        assert!(eq.plans.len() > 10);
        for p in &eq.plans {
            assert!(plan_is_safe(p, &s, &FdSet::default()).unwrap(), "{p}");
        }
        assert!(!eq.plans.contains(&fixtures::p1()));
    }
}
