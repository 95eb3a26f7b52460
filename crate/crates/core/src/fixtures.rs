//! Small datasets used by tests, benches and the CLI's builtin plans.

use crate::cfi::TransactionDb;
use crate::ops::{CmpOp, Comparison, Operand};
use crate::plan::{Attr, Plan, SchemaMap};
use crate::prob::ProbDatabase;
use crate::query::{ConjunctiveQuery, RelRef};
use crate::relation::{Relation, Value};

/// The five-transaction example database.
pub fn example_transactions() -> TransactionDb {
    TransactionDb::parse("a c d e f\na b e\nc e f\na c d f\nc e f\n")
}

fn row(event: &str, values: Vec<Value>, p: f64) -> (String, Vec<Value>, f64) {
    (event.to_string(), values, p)
}

/// Employees, departments and ranks with events e1..e3, d1..d2, r1..r2.
pub fn example_db() -> ProbDatabase {
    let emp = Relation::base_with_events(
        "Emp",
        &["eid", "name", "did", "rid"],
        vec![
            row("e1", vec![1.into(), "john".into(), 1.into(), 1.into()], 0.6),
            row("e2", vec![2.into(), "mary".into(), 1.into(), 1.into()], 0.9),
            row("e3", vec![3.into(), "joe".into(), 2.into(), 1.into()], 0.8),
        ],
    );
    let dept = Relation::base_with_events(
        "Dept",
        &["did", "dname"],
        vec![row("d1", vec![1.into(), "R&D".into()], 0.5), row("d2", vec![2.into(), "Sales".into()], 0.2)],
    );
    let rank = Relation::base_with_events(
        "Rank",
        &["rid", "rname"],
        vec![row("r1", vec![1.into(), "A".into()], 0.5), row("r2", vec![2.into(), "B".into()], 0.1)],
    );
    ProbDatabase::new([emp, dept, rank].map(|r| r.expect("fixture relation is valid")))
        .expect("fixture database is valid")
}

fn a(rel: &str, name: &str) -> Attr {
    Attr::new(rel, name)
}

/// Departments and ranks that have an employee.
pub fn q_e() -> ConjunctiveQuery {
    let rels = example_db().schemas();
    let rel = |n: &str| RelRef { name: n.to_string(), attrs: rels[n].clone() };
    ConjunctiveQuery {
        rels: vec![rel("Emp"), rel("Dept"), rel("Rank")],
        head: vec![a("Emp", "did"), a("Emp", "rid")],
        join_preds: vec![(a("Emp", "did"), a("Dept", "did")), (a("Emp", "rid"), a("Rank", "rid"))],
        sel_preds: vec![],
    }
}

/// Cross product of Rank and Dept, joined with Emp, projected last. Unsafe.
pub fn p1() -> Plan {
    Plan::project(
        vec![a("Emp", "did"), a("Emp", "rid")],
        Plan::join(
            vec![(a("Dept", "did"), a("Emp", "did")), (a("Rank", "rid"), a("Emp", "rid"))],
            Plan::join(vec![], Plan::scan("Rank"), Plan::scan("Dept")),
            Plan::scan("Emp"),
        ),
    )
}

/// Every input projected onto its join attributes before joining. Safe.
pub fn p2() -> Plan {
    Plan::project(
        vec![a("Emp", "did"), a("Emp", "rid")],
        Plan::join(
            vec![(a("Emp", "rid"), a("Rank", "rid"))],
            Plan::join(
                vec![(a("Emp", "did"), a("Dept", "did"))],
                Plan::project(vec![a("Emp", "did"), a("Emp", "rid")], Plan::scan("Emp")),
                Plan::project(vec![a("Dept", "did")], Plan::scan("Dept")),
            ),
            Plan::project(vec![a("Rank", "rid")], Plan::scan("Rank")),
        ),
    )
}

/// `Dept.dname = 'R&D'` style selection.
pub fn eq_const(rel: &str, name: &str, v: impl Into<Value>) -> Comparison<Attr> {
    Comparison::new(a(rel, name), CmpOp::Eq, Operand::Const(v.into()))
}

/// Schemas for the movies/actors example query.
pub fn movie_schemas() -> SchemaMap {
    [
        ("movies", vec!["mid", "title"]),
        ("actors", vec!["aid", "name"]),
        ("movie_actors", vec!["mid", "aid"]),
    ]
    .into_iter()
    .map(|(r, attrs)| (r.to_string(), attrs.into_iter().map(String::from).collect()))
    .collect()
}
