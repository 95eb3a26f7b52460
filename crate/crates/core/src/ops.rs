//! Relational operators as MapReduce jobs with extensional probabilities.
//!
//! Selection is map-only. Projection and join shuffle every mapped tuple to
//! a reducer. The fused select-project and select-join jobs filter in the
//! mapper and so save the separate selection pass.

use std::cmp::Ordering;
use std::fmt;

use crate::engine::{make_splits, CostCounters, Engine, JobConfig, MapOnly, MapReduce, Split, TaskError};
use crate::lineage::Dnf;
use crate::relation::{ProbTuple, RelError, Relation, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Ge => ord != Ordering::Less,
            CmpOp::Gt => ord == Ordering::Greater,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            "=" => CmpOp::Eq,
            "!=" | "<>" => CmpOp::Ne,
            ">=" => CmpOp::Ge,
            ">" => CmpOp::Gt,
            _ => return None,
        })
    }

    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne, CmpOp::Ge, CmpOp::Gt];
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand<A> {
    Attr(A),
    Const(Value),
}

/// `left op right`, where `right` is an attribute or a constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Comparison<A> {
    pub left: A,
    pub op: CmpOp,
    pub right: Operand<A>,
}

impl<A> Comparison<A> {
    pub fn new(left: A, op: CmpOp, right: Operand<A>) -> Self {
        Self { left, op, right }
    }

    pub fn attrs(&self) -> Vec<&A> {
        match &self.right {
            Operand::Attr(b) => vec![&self.left, b],
            Operand::Const(_) => vec![&self.left],
        }
    }

    pub fn map<B>(&self, f: impl Fn(&A) -> B) -> Comparison<B> {
        Comparison {
            left: f(&self.left),
            op: self.op,
            right: match &self.right {
                Operand::Attr(a) => Operand::Attr(f(a)),
                Operand::Const(v) => Operand::Const(v.clone()),
            },
        }
    }
}

impl<A: fmt::Display> fmt::Display for Comparison<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.left, self.op.symbol())?;
        match &self.right {
            Operand::Attr(a) => write!(f, "{a}"),
            Operand::Const(Value::Int(i)) => write!(f, "{i}"),
            Operand::Const(Value::Str(s)) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

/// A comparison over column positions.
#[derive(Debug, Clone)]
struct Compiled {
    left: usize,
    op: CmpOp,
    right: Operand<usize>,
}

impl Compiled {
    fn new(cond: &Comparison<String>, schema: &Schema) -> Result<Self, RelError> {
        Ok(Self {
            left: schema.index(&cond.left)?,
            op: cond.op,
            right: match &cond.right {
                Operand::Attr(a) => Operand::Attr(schema.index(a)?),
                Operand::Const(v) => Operand::Const(v.clone()),
            },
        })
    }

    fn test(&self, values: &[Value]) -> bool {
        let rhs = match &self.right {
            Operand::Attr(i) => &values[*i],
            Operand::Const(v) => v,
        };
        self.op.holds(values[self.left].cmp(rhs))
    }
}

fn passes(conds: &[Compiled], values: &[Value]) -> bool {
    conds.iter().all(|c| c.test(values))
}

fn compile(conds: &[Comparison<String>], schema: &Schema) -> Result<Vec<Compiled>, RelError> {
    conds.iter().map(|c| Compiled::new(c, schema)).collect()
}

/// Where operator jobs run.
#[derive(Debug, Clone)]
pub struct Executor {
    pub engine: Engine,
    pub split_size: usize,
    pub num_reducers: usize,
}

impl Default for Executor {
    fn default() -> Self {
        Self { engine: Engine::sequential(), split_size: 4, num_reducers: 2 }
    }
}

impl Executor {
    fn job_config(&self) -> JobConfig {
        JobConfig { num_reducers: self.num_reducers, combine: false }
    }
}

pub type OpResult = Result<(Relation, CostCounters), RelError>;

struct SelectJob {
    conds: Vec<Compiled>,
}

impl MapOnly for SelectJob {
    type Input = ProbTuple;
    type Output = ProbTuple;
    type Context = ();

    fn map(&self, _: &(), t: &ProbTuple, emit: &mut Vec<ProbTuple>) -> Result<(), TaskError> {
        if passes(&self.conds, &t.values) {
            emit.push(t.clone());
        }
        Ok(())
    }
}

struct ProjectJob {
    filter: Vec<Compiled>,
    columns: Vec<usize>,
}

impl MapReduce for ProjectJob {
    type Input = ProbTuple;
    type Key = Vec<Value>;
    type Value = (f64, Dnf);
    type Output = ProbTuple;
    type Context = ();

    fn map(&self, _: &(), t: &ProbTuple, emit: &mut Vec<(Vec<Value>, (f64, Dnf))>) -> Result<(), TaskError> {
        if passes(&self.filter, &t.values) {
            let key = self.columns.iter().map(|&i| t.values[i].clone()).collect();
            emit.push((key, (t.prob, t.lineage.clone())));
        }
        Ok(())
    }

    fn reduce(
        &self,
        _: &(),
        key: &Vec<Value>,
        values: Vec<(f64, Dnf)>,
        emit: &mut Vec<ProbTuple>,
    ) -> Result<(), TaskError> {
        let absent: f64 = values.iter().map(|(p, _)| 1.0 - p).product();
        let lineage = values.iter().fold(Dnf::falsity(), |acc, (_, l)| acc.or(l));
        emit.push(ProbTuple { values: key.clone(), prob: 1.0 - absent, lineage });
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

struct JoinJob {
    left_key: Vec<usize>,
    right_key: Vec<usize>,
    left_filter: Vec<Compiled>,
    right_filter: Vec<Compiled>,
    right_keep: Vec<usize>,
}

impl MapReduce for JoinJob {
    type Input = (Side, ProbTuple);
    type Key = Vec<Value>;
    type Value = (Side, ProbTuple);
    type Output = ProbTuple;
    type Context = ();

    fn map(&self, _: &(), record: &(Side, ProbTuple), emit: &mut Vec<(Vec<Value>, (Side, ProbTuple))>) -> Result<(), TaskError> {
        let (side, t) = record;
        let (filter, key) = match side {
            Side::Left => (&self.left_filter, &self.left_key),
            Side::Right => (&self.right_filter, &self.right_key),
        };
        if passes(filter, &t.values) {
            let k = key.iter().map(|&i| t.values[i].clone()).collect();
            emit.push((k, (*side, t.clone())));
        }
        Ok(())
    }

    fn reduce(
        &self,
        _: &(),
        _: &Vec<Value>,
        values: Vec<(Side, ProbTuple)>,
        emit: &mut Vec<ProbTuple>,
    ) -> Result<(), TaskError> {
        let (lefts, rights): (Vec<_>, Vec<_>) = values.into_iter().partition(|(s, _)| *s == Side::Left);
        for (_, l) in &lefts {
            for (_, r) in &rights {
                let mut values = l.values.clone();
                values.extend(self.right_keep.iter().map(|&i| r.values[i].clone()));
                emit.push(ProbTuple { values, prob: l.prob * r.prob, lineage: l.lineage.and(&r.lineage) });
            }
        }
        Ok(())
    }
}

fn sorted(mut tuples: Vec<ProbTuple>) -> Vec<ProbTuple> {
    tuples.sort_by(|a, b| a.values.cmp(&b.values).then_with(|| a.lineage.cmp(&b.lineage)));
    tuples
}

fn project_columns(r: &Relation, attrs: &[String]) -> Result<(Vec<usize>, Schema), RelError> {
    if attrs.is_empty() {
        return Err(RelError::EmptyProjection);
    }
    let columns = attrs.iter().map(|a| r.schema.index(a)).collect::<Result<Vec<_>, _>>()?;
    Ok((columns, Schema::new(r.schema.name.clone(), attrs.to_vec())?))
}

pub fn op_select(exec: &Executor, r: &Relation, cond: &Comparison<String>) -> OpResult {
    select_all(exec, r, std::slice::from_ref(cond))
}

/// One map-only job keeping the tuples that satisfy every condition.
pub fn select_all(exec: &Executor, r: &Relation, conds: &[Comparison<String>]) -> OpResult {
    let job = SelectJob { conds: compile(conds, &r.schema)? };
    let splits = make_splits(r.tuples.clone(), exec.split_size)?;
    let out = exec.engine.run_map_only(&job, &splits, &())?;
    let counters = out.counters.clone();
    Ok((Relation::new(r.schema.clone(), out.into_records())?, counters))
}

pub fn op_project(exec: &Executor, r: &Relation, attrs: &[String]) -> OpResult {
    select_project(exec, r, &[], attrs)
}

pub fn op_select_project(exec: &Executor, r: &Relation, cond: &Comparison<String>, attrs: &[String]) -> OpResult {
    select_project(exec, r, std::slice::from_ref(cond), attrs)
}

/// Projection whose mapper first drops tuples failing any condition.
pub fn select_project(exec: &Executor, r: &Relation, conds: &[Comparison<String>], attrs: &[String]) -> OpResult {
    let (columns, schema) = project_columns(r, attrs)?;
    let filter = compile(conds, &r.schema)?;
    let splits = make_splits(r.tuples.clone(), exec.split_size)?;
    let out = exec.engine.run(&ProjectJob { filter, columns }, &exec.job_config(), &splits, &())?;
    let counters = out.counters.clone();
    Ok((Relation::new(schema, sorted(out.into_records()))?, counters))
}

/// Projection onto no attributes: a single zero-column tuple holding the
/// probability that some tuple passing `conds` exists, or nothing when none
/// passes.
pub fn select_exists(exec: &Executor, r: &Relation, conds: &[Comparison<String>]) -> OpResult {
    let filter = compile(conds, &r.schema)?;
    let splits = make_splits(r.tuples.clone(), exec.split_size)?;
    let out = exec.engine.run(&ProjectJob { filter, columns: vec![] }, &exec.job_config(), &splits, &())?;
    let counters = out.counters.clone();
    Ok((Relation::new(Schema::new(r.schema.name.clone(), vec![])?, out.into_records())?, counters))
}

pub fn op_exists(exec: &Executor, r: &Relation) -> OpResult {
    select_exists(exec, r, &[])
}

/// [`select_project`], or [`select_exists`] for an empty attribute list.
pub fn select_project_or_exists(
    exec: &Executor,
    r: &Relation,
    conds: &[Comparison<String>],
    attrs: &[String],
) -> OpResult {
    if attrs.is_empty() {
        select_exists(exec, r, conds)
    } else {
        select_project(exec, r, conds, attrs)
    }
}

/// Equi-join on `on` (pairs of left/right attributes), or on all shared
/// attribute names when `on` is `None`. A right attribute equated with a
/// same-named left attribute appears once in the output.
pub fn op_join(exec: &Executor, r: &Relation, s: &Relation, on: Option<&[(String, String)]>) -> OpResult {
    select_join(exec, r, &[], s, &[], on)
}

pub fn op_select_join(
    exec: &Executor,
    r: &Relation,
    s: &Relation,
    cond_on_r: &Comparison<String>,
    on: Option<&[(String, String)]>,
) -> OpResult {
    select_join(exec, r, std::slice::from_ref(cond_on_r), s, &[], on)
}

/// Join whose mapper applies selections to either input.
pub fn select_join(
    exec: &Executor,
    r: &Relation,
    r_conds: &[Comparison<String>],
    s: &Relation,
    s_conds: &[Comparison<String>],
    on: Option<&[(String, String)]>,
) -> OpResult {
    let pairs: Vec<(String, String)> = match on {
        Some(p) => p.to_vec(),
        None => r
            .schema
            .attrs
            .iter()
            .filter(|a| s.schema.attrs.contains(a))
            .map(|a| (a.clone(), a.clone()))
            .collect(),
    };
    let left_key = pairs.iter().map(|(a, _)| r.schema.index(a)).collect::<Result<Vec<_>, _>>()?;
    let right_key = pairs.iter().map(|(_, b)| s.schema.index(b)).collect::<Result<Vec<_>, _>>()?;
    let merged: Vec<usize> = pairs
        .iter()
        .zip(&right_key)
        .filter(|((a, b), _)| a == b)
        .map(|(_, &j)| j)
        .collect();
    let right_keep: Vec<usize> = (0..s.schema.arity()).filter(|j| !merged.contains(j)).collect();
    let mut attrs = r.schema.attrs.clone();
    attrs.extend(right_keep.iter().map(|&j| s.schema.attrs[j].clone()));
    let schema = Schema::new(format!("{}_{}", r.schema.name, s.schema.name), attrs)?;

    let job = JoinJob {
        left_key,
        right_key,
        left_filter: compile(r_conds, &r.schema)?,
        right_filter: compile(s_conds, &s.schema)?,
        right_keep,
    };
    let mut splits: Vec<Split<(Side, ProbTuple)>> =
        make_splits(r.tuples.iter().map(|t| (Side::Left, t.clone())).collect(), exec.split_size)?;
    let right = make_splits(s.tuples.iter().map(|t| (Side::Right, t.clone())).collect(), exec.split_size)?;
    let offset = splits.len();
    splits.extend(right.into_iter().map(|mut sp| {
        sp.id += offset;
        sp
    }));
    let out = exec.engine.run(&job, &exec.job_config(), &splits, &())?;
    let counters = out.counters.clone();
    Ok((Relation::new(schema, sorted(out.into_records()))?, counters))
}
