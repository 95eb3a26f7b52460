//! Relation statistics and base dependencies.
//!
//! ```text
//! T Emp 3
//! V Emp did,rid 2
//! FD Emp eid E
//! ```
//!
//! `T` gives a row count, `V` a distinct count over one or more attributes,
//! and `FD` a dependency inside one relation (`E` names the event
//! attribute, `-` an empty side).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::plan::Attr;
use crate::prob::ProbDatabase;
use crate::safety::{Fd, FdAttr, FdSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog has no statistic {0}")]
    Miss(String),
    #[error("catalog line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    rows: BTreeMap<String, f64>,
    distinct: BTreeMap<(String, BTreeSet<String>), f64>,
    pub fds: FdSet,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_rows(&mut self, rel: &str, t: f64) -> &mut Self {
        self.rows.insert(rel.to_string(), t);
        self
    }

    pub fn set_distinct(&mut self, rel: &str, attrs: &[&str], v: f64) -> &mut Self {
        self.distinct.insert((rel.to_string(), attrs.iter().map(|a| a.to_string()).collect()), v);
        self
    }

    pub fn rows(&self, rel: &str) -> Result<f64, CatalogError> {
        self.rows.get(rel).copied().ok_or_else(|| CatalogError::Miss(format!("T({rel})")))
    }

    pub fn distinct(&self, rel: &str, attrs: &[&str]) -> Option<f64> {
        let key = (rel.to_string(), attrs.iter().map(|a| a.to_string()).collect());
        self.distinct.get(&key).copied()
    }

    /// Every distinct-count statistic of `rel`, keyed by qualified attributes.
    pub fn distinct_of<'a>(&'a self, rel: &'a str) -> impl Iterator<Item = (BTreeSet<Attr>, f64)> + 'a {
        self.distinct
            .iter()
            .filter(move |((r, _), _)| r == rel)
            .map(move |((_, attrs), v)| (attrs.iter().map(|a| Attr::new(rel, a.clone())).collect(), *v))
    }

    /// Exact row and single-attribute distinct counts of a database.
    pub fn from_db(db: &ProbDatabase) -> Self {
        let mut c = Catalog::new();
        for r in db.relations() {
            c.set_rows(&r.schema.name, r.len() as f64);
            for (i, a) in r.schema.attrs.iter().enumerate() {
                let v: BTreeSet<_> = r.tuples.iter().map(|t| &t.values[i]).collect();
                c.set_distinct(&r.schema.name, &[a], v.len() as f64);
            }
        }
        c
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut c = Catalog::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| CatalogError::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let count = |s: &str| -> Result<f64, CatalogError> {
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                    _ => Err(err(format!("bad count `{s}`"))),
                }
            };
            match fields.as_slice() {
                ["T", rel, n] => {
                    c.set_rows(rel, count(n)?);
                }
                ["V", rel, attrs, n] => {
                    let attrs: Vec<&str> = attrs.split(',').collect();
                    if attrs.iter().any(|a| a.is_empty()) {
                        return Err(err("empty attribute name".into()));
                    }
                    c.set_distinct(rel, &attrs, count(n)?);
                }
                ["FD", rel, lhs, rhs] => {
                    let side = |s: &str| -> Vec<FdAttr> {
                        if s == "-" {
                            return vec![];
                        }
                        s.split(',')
                            .map(|a| if a == "E" { FdAttr::Event(rel.to_string()) } else { FdAttr::Col(Attr::new(*rel, a)) })
                            .collect()
                    };
                    c.fds.fds.push(Fd::new(side(lhs), side(rhs)));
                }
                _ => return Err(err(format!("expected `T rel n`, `V rel attrs n` or `FD rel lhs rhs`, found `{line}`"))),
            }
        }
        Ok(c)
    }
}

impl fmt::Display for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (rel, t) in &self.rows {
            writeln!(f, "T {rel} {t}")?;
        }
        for ((rel, attrs), v) in &self.distinct {
            let list = attrs.iter().map(String::as_str).collect::<Vec<_>>().join(",");
            writeln!(f, "V {rel} {list} {v}")?;
        }
        for fd in &self.fds.fds {
            let rel = fd
                .lhs
                .iter()
                .chain(&fd.rhs)
                .map(|a| match a {
                    FdAttr::Col(c) => c.rel.as_str(),
                    FdAttr::Event(r) => r.as_str(),
                })
                .next()
                .unwrap_or("-");
            let side = |s: &BTreeSet<FdAttr>| {
                if s.is_empty() {
                    return "-".to_string();
                }
                s.iter()
                    .map(|a| match a {
                        FdAttr::Col(c) => c.name.clone(),
                        FdAttr::Event(_) => "E".to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(",")
            };
            writeln!(f, "FD {rel} {} {}", side(&fd.lhs), side(&fd.rhs))?;
        }
        Ok(())
    }
}
