//! Logical plans over qualified attributes, with a textual form.
//!
//! ```text
//! project[Emp.did,Emp.rid](join[Emp.did=Dept.did](scan Emp, scan Dept))
//! select[Dept.dname='R&D'](scan Dept)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::ops::{CmpOp, Comparison, Operand};
use crate::relation::Value;

/// Attribute names of each base relation, in declaration order.
pub type SchemaMap = BTreeMap<String, Vec<String>>;

/// A relation-qualified attribute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attr {
    pub rel: String,
    pub name: String,
}

impl Attr {
    pub fn new(rel: impl Into<String>, name: impl Into<String>) -> Self {
        Self { rel: rel.into(), name: name.into() }
    }
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.rel, self.name)
    }
}

impl FromStr for Attr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((r, n)) if !r.is_empty() && !n.is_empty() && !n.contains('.') => Ok(Attr::new(r, n)),
            _ => Err(format!("`{s}` is not a qualified attribute")),
        }
    }
}

pub type Cond = Comparison<Attr>;
/// Equality between a left-input and a right-input attribute.
pub type JoinPred = (Attr, Attr);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Plan {
    Scan(String),
    Select(Cond, Box<Plan>),
    Project(Vec<Attr>, Box<Plan>),
    Join(Vec<JoinPred>, Box<Plan>, Box<Plan>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("plan scans unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("plan references `{attr}` which its input does not produce")]
    UnknownAttribute { attr: Attr },
    #[error("join predicate {left}={right} does not connect the left and right inputs")]
    BadJoinPredicate { left: Attr, right: Attr },
    #[error("relation `{0}` is scanned more than once")]
    RepeatedRelation(String),
    #[error("plan syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
}

impl Plan {
    pub fn scan(rel: impl Into<String>) -> Plan {
        Plan::Scan(rel.into())
    }

    pub fn select(cond: Cond, child: Plan) -> Plan {
        Plan::Select(cond, Box::new(child))
    }

    pub fn project(attrs: Vec<Attr>, child: Plan) -> Plan {
        Plan::Project(attrs, Box::new(child))
    }

    pub fn join(preds: Vec<JoinPred>, left: Plan, right: Plan) -> Plan {
        Plan::Join(preds, Box::new(left), Box::new(right))
    }

    /// Scanned relations, left to right.
    pub fn relations(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |p| {
            if let Plan::Scan(r) = p {
                out.push(r.as_str());
            }
        });
        out
    }

    pub fn num_joins(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += usize::from(matches!(p, Plan::Join(..))));
        n
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Plan)) {
        f(self);
        match self {
            Plan::Scan(_) => {}
            Plan::Select(_, c) | Plan::Project(_, c) => c.visit(f),
            Plan::Join(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
        }
    }

    /// Output attributes, after checking every reference resolves.
    pub fn output_attrs(&self, schemas: &SchemaMap) -> Result<Vec<Attr>, PlanError> {
        let mut seen = BTreeSet::new();
        self.check(schemas, &mut seen)
    }

    fn check<'a>(&'a self, schemas: &SchemaMap, seen: &mut BTreeSet<&'a str>) -> Result<Vec<Attr>, PlanError> {
        match self {
            Plan::Scan(r) => {
                let attrs = schemas.get(r).ok_or_else(|| PlanError::UnknownRelation(r.clone()))?;
                if !seen.insert(r) {
                    return Err(PlanError::RepeatedRelation(r.clone()));
                }
                Ok(attrs.iter().map(|a| Attr::new(r.clone(), a.clone())).collect())
            }
            Plan::Select(c, child) => {
                let out = child.check(schemas, seen)?;
                for a in c.attrs() {
                    if !out.contains(a) {
                        return Err(PlanError::UnknownAttribute { attr: a.clone() });
                    }
                }
                Ok(out)
            }
            Plan::Project(attrs, child) => {
                let out = child.check(schemas, seen)?;
                for a in attrs {
                    if !out.contains(a) {
                        return Err(PlanError::UnknownAttribute { attr: a.clone() });
                    }
                }
                Ok(attrs.clone())
            }
            Plan::Join(preds, l, r) => {
                let lo = l.check(schemas, seen)?;
                let ro = r.check(schemas, seen)?;
                for (a, b) in preds {
                    if !lo.contains(a) || !ro.contains(b) {
                        return Err(PlanError::BadJoinPredicate { left: a.clone(), right: b.clone() });
                    }
                }
                Ok(lo.into_iter().chain(ro).collect())
            }
        }
    }

    pub fn parse(text: &str) -> Result<Plan, PlanError> {
        let mut p = PlanParser { src: text, pos: 0 };
        let plan = p.plan()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.err("trailing input"));
        }
        Ok(plan)
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Plan::Scan(r) => write!(f, "scan {r}"),
            Plan::Select(c, child) => write!(f, "select[{c}]({child})"),
            Plan::Project(attrs, child) => {
                let list = attrs.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
                write!(f, "project[{list}]({child})")
            }
            Plan::Join(preds, l, r) => {
                let list = preds.iter().map(|(a, b)| format!("{a}={b}")).collect::<Vec<_>>().join(",");
                write!(f, "join[{list}]({l}, {r})")
            }
        }
    }
}

impl FromStr for Plan {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Plan::parse(s)
    }
}

struct PlanParser<'a> {
    src: &'a str,
    pos: usize,
}

impl PlanParser<'_> {
    fn err(&self, msg: impl Into<String>) -> PlanError {
        PlanError::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), PlanError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn ident(&mut self) -> Result<String, PlanError> {
        self.skip_ws();
        let len = self
            .rest()
            .char_indices()
            .find(|&(i, c)| !(c == '_' || c.is_alphanumeric()) || (i == 0 && c.is_ascii_digit()))
            .map_or(self.rest().len(), |(i, _)| i);
        if len == 0 {
            return Err(self.err("expected identifier"));
        }
        let id = self.rest()[..len].to_string();
        self.pos += len;
        Ok(id)
    }

    fn attr(&mut self) -> Result<Attr, PlanError> {
        let rel = self.ident()?;
        if !self.rest().starts_with('.') {
            return Err(self.err("expected `.` in qualified attribute"));
        }
        self.pos += 1;
        let name = self.ident()?;
        Ok(Attr::new(rel, name))
    }

    fn operand(&mut self) -> Result<Operand<Attr>, PlanError> {
        self.skip_ws();
        let rest = self.rest();
        if let Some(stripped) = rest.strip_prefix('\'') {
            let mut value = String::new();
            let mut chars = stripped.char_indices().peekable();
            while let Some((i, c)) = chars.next() {
                if c == '\'' {
                    if matches!(chars.peek(), Some((_, '\''))) {
                        value.push('\'');
                        chars.next();
                    } else {
                        self.pos += i + 2;
                        return Ok(Operand::Const(Value::Str(value)));
                    }
                } else {
                    value.push(c);
                }
            }
            return Err(self.err("unterminated string"));
        }
        if rest.starts_with(|c: char| c == '-' || c.is_ascii_digit()) {
            let len = rest
                .char_indices()
                .find(|&(i, c)| !(c.is_ascii_digit() || (i == 0 && c == '-')))
                .map_or(rest.len(), |(i, _)| i);
            let n = rest[..len].parse::<i64>().map_err(|_| self.err("bad integer"))?;
            self.pos += len;
            return Ok(Operand::Const(Value::Int(n)));
        }
        Ok(Operand::Attr(self.attr()?))
    }

    fn cmp_op(&mut self) -> Result<CmpOp, PlanError> {
        self.skip_ws();
        for sym in ["<=", ">=", "!=", "<>", "=", "<", ">"] {
            if self.rest().starts_with(sym) {
                self.pos += sym.len();
                return Ok(CmpOp::from_symbol(sym).expect("known symbol"));
            }
        }
        Err(self.err("expected comparison operator"))
    }

    fn plan(&mut self) -> Result<Plan, PlanError> {
        let start = self.pos;
        let word = self.ident()?;
        match word.as_str() {
            "scan" => Ok(Plan::Scan(self.ident()?)),
            "select" => {
                self.expect("[")?;
                let left = self.attr()?;
                let op = self.cmp_op()?;
                let right = self.operand()?;
                self.expect("]")?;
                self.expect("(")?;
                let child = self.plan()?;
                self.expect(")")?;
                Ok(Plan::select(Comparison::new(left, op, right), child))
            }
            "project" => {
                self.expect("[")?;
                let mut attrs = Vec::new();
                if !self.eat("]") {
                    attrs.push(self.attr()?);
                    while self.eat(",") {
                        attrs.push(self.attr()?);
                    }
                    self.expect("]")?;
                }
                self.expect("(")?;
                let child = self.plan()?;
                self.expect(")")?;
                Ok(Plan::project(attrs, child))
            }
            "join" => {
                self.expect("[")?;
                let mut preds = Vec::new();
                if !self.eat("]") {
                    loop {
                        let a = self.attr()?;
                        self.expect("=")?;
                        let b = self.attr()?;
                        preds.push((a, b));
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                self.expect("(")?;
                let l = self.plan()?;
                self.expect(",")?;
                let r = self.plan()?;
                self.expect(")")?;
                Ok(Plan::join(preds, l, r))
            }
            _ => {
                self.pos = start;
                Err(self.err(format!("unknown operator `{word}`")))
            }
        }
    }
}
