//! Size estimates for logical plan nodes.

use std::collections::{BTreeMap, BTreeSet};

use super::catalog::{Catalog, CatalogError};
use crate::ops::{CmpOp, Operand};
use crate::plan::{Attr, Plan};

/// Estimated rows of a node and distinct counts of its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub rows: f64,
    distinct: BTreeMap<Attr, f64>,
    /// Distinct counts over attribute sets, from multi-attribute statistics.
    groups: BTreeMap<BTreeSet<Attr>, f64>,
    /// Attributes equated by joins or selections below this node.
    classes: Vec<BTreeSet<Attr>>,
}

impl Estimate {
    pub fn distinct(&self, a: &Attr) -> Result<f64, CatalogError> {
        self.distinct.get(a).copied().ok_or_else(|| CatalogError::Miss(format!("V({}, {})", a.rel, a.name)))
    }

    /// Merges the classes of `a` and `b` and gives every member the
    /// smaller distinct count.
    fn equate(&mut self, a: &Attr, b: &Attr) -> Result<(), CatalogError> {
        let v = self.distinct(a)?.min(self.distinct(b)?);
        let mut merged: BTreeSet<Attr> = [a.clone(), b.clone()].into();
        self.classes.retain(|c| {
            let hit = c.contains(a) || c.contains(b);
            if hit {
                merged.extend(c.iter().cloned());
            }
            !hit
        });
        for m in &merged {
            self.distinct.insert(m.clone(), v);
        }
        self.classes.push(merged);
        Ok(())
    }

    fn same_class(&self, a: &Attr, b: &Attr) -> bool {
        a == b || self.classes.iter().any(|c| c.contains(a) && c.contains(b))
    }

    /// Sets the distinct count of `a` and of every attribute equated with it.
    fn fix(&mut self, a: &Attr, v: f64) {
        let class = self.classes.iter().find(|c| c.contains(a)).cloned().unwrap_or_else(|| [a.clone()].into());
        for m in class {
            self.distinct.insert(m, v);
        }
    }

    fn cap(mut self) -> Self {
        let rows = self.rows;
        self.distinct.values_mut().for_each(|v| *v = v.min(rows));
        self.groups.values_mut().for_each(|v| *v = v.min(rows));
        self
    }
}

/// Selectivity of a comparison that is neither `=` nor `!=`.
pub const INEQUALITY_FRACTION: f64 = 1.0 / 3.0;

pub fn estimate_size(node: &Plan, catalog: &Catalog) -> Result<Estimate, CatalogError> {
    match node {
        Plan::Scan(rel) => {
            let rows = catalog.rows(rel)?;
            let mut distinct = BTreeMap::new();
            let mut groups = BTreeMap::new();
            for (attrs, v) in catalog.distinct_of(rel) {
                if attrs.len() == 1 {
                    distinct.insert(attrs.iter().next().unwrap().clone(), v);
                }
                groups.insert(attrs, v);
            }
            Ok(Estimate { rows, distinct, groups, classes: Vec::new() }.cap())
        }
        Plan::Select(c, child) => {
            let mut e = estimate_size(child, catalog)?;
            let rows = match (&c.op, &c.right) {
                (CmpOp::Eq, Operand::Const(_)) => e.rows / e.distinct(&c.left)?.max(1.0),
                (CmpOp::Eq, Operand::Attr(b)) if e.same_class(&c.left, b) => e.rows,
                (CmpOp::Eq, Operand::Attr(b)) => e.rows / e.distinct(&c.left)?.max(e.distinct(b)?).max(1.0),
                (CmpOp::Ne, _) => e.rows,
                _ => e.rows * INEQUALITY_FRACTION,
            };
            let fraction = if e.rows > 0.0 { rows / e.rows } else { 1.0 };
            let touched = |g: &BTreeSet<Attr>| g.contains(&c.left) || matches!(&c.right, Operand::Attr(b) if g.contains(b));
            e.groups.iter_mut().filter(|(g, _)| touched(g)).for_each(|(_, v)| *v *= fraction);
            e.rows = rows;
            if c.op == CmpOp::Eq {
                match &c.right {
                    Operand::Const(_) => e.fix(&c.left, 1.0),
                    Operand::Attr(b) => e.equate(&c.left, b)?,
                }
            }
            Ok(e)
        }
        Plan::Project(attrs, child) => {
            // Π_X(Π_Y(c)) is Π_X(c); estimating it that way keeps stacked
            // projections from halving the row count more than once.
            let mut child = &**child;
            while let Plan::Project(_, inner) = child {
                child = inner;
            }
            let e = estimate_size(child, catalog)?;
            let set: BTreeSet<Attr> = attrs.iter().cloned().collect();
            let rows = match e.groups.get(&set) {
                Some(v) => v.min(e.rows),
                None => {
                    let product = attrs.iter().map(|a| e.distinct(a)).product::<Result<f64, _>>()?;
                    (e.rows / 2.0).min(product)
                }
            };
            let distinct = e.distinct.into_iter().filter(|(a, _)| set.contains(a)).collect();
            let groups = e.groups.into_iter().filter(|(g, _)| g.is_subset(&set)).collect();
            let classes = e.classes.into_iter().map(|c| &c & &set).filter(|c| c.len() > 1).collect();
            Ok(Estimate { rows, distinct, groups, classes })
        }
        Plan::Join(preds, l, r) => {
            let (le, re) = (estimate_size(l, catalog)?, estimate_size(r, catalog)?);
            let mut distinct = le.distinct;
            distinct.extend(re.distinct);
            let mut groups = le.groups;
            groups.extend(re.groups);
            let mut classes = le.classes;
            classes.extend(re.classes);
            let mut e = Estimate { rows: le.rows * re.rows, distinct, groups, classes };
            // A predicate implied by earlier equalities does not filter again.
            for (a, b) in preds {
                if !e.same_class(a, b) {
                    e.rows /= e.distinct(a)?.max(e.distinct(b)?).max(1.0);
                    e.equate(a, b)?;
                }
            }
            Ok(e)
        }
    }
}

/// Rows assuming no selection or projection shrinks its input and every
/// join is a cross product.
pub fn upper_bound_size(node: &Plan, catalog: &Catalog) -> Result<f64, CatalogError> {
    match node {
        Plan::Scan(rel) => catalog.rows(rel),
        Plan::Select(_, c) | Plan::Project(_, c) => upper_bound_size(c, catalog),
        Plan::Join(_, l, r) => Ok(upper_bound_size(l, catalog)? * upper_bound_size(r, catalog)?),
    }
}
