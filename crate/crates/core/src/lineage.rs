//! Provenance formulas in disjunctive normal form and their exact probability.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type Event = String;
pub type Conjunct = BTreeSet<Event>;

pub const DEFAULT_VARIABLE_LIMIT: usize = 24;

/// A monotone DNF over event variables. No conjuncts is false; a single
/// empty conjunct is true. Kept absorbed: no conjunct contains another.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dnf(BTreeSet<Conjunct>);

impl Dnf {
    pub fn falsity() -> Self {
        Self(BTreeSet::new())
    }

    pub fn truth() -> Self {
        Self(BTreeSet::from([Conjunct::new()]))
    }

    pub fn literal(event: impl Into<Event>) -> Self {
        Self(BTreeSet::from([Conjunct::from([event.into()])]))
    }

    pub fn from_conjuncts<I, C, E>(conjuncts: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = E>,
        E: Into<Event>,
    {
        absorbed(conjuncts.into_iter().map(|c| c.into_iter().map(Into::into).collect()).collect())
    }

    pub fn conjuncts(&self) -> &BTreeSet<Conjunct> {
        &self.0
    }

    pub fn is_false(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_true(&self) -> bool {
        self.0.iter().any(|c| c.is_empty())
    }

    pub fn and(&self, other: &Dnf) -> Dnf {
        let mut out = BTreeSet::new();
        for a in &self.0 {
            for b in &other.0 {
                out.insert(a.union(b).cloned().collect());
            }
        }
        absorbed(out)
    }

    pub fn or(&self, other: &Dnf) -> Dnf {
        absorbed(self.0.union(&other.0).cloned().collect())
    }

    pub fn variables(&self) -> BTreeSet<Event> {
        self.0.iter().flatten().cloned().collect()
    }

    /// Truth value under an assignment of the present events.
    pub fn eval(&self, present: &dyn Fn(&str) -> bool) -> bool {
        self.0.iter().any(|c| c.iter().all(|e| present(e)))
    }

    fn condition(&self, var: &str, value: bool) -> Dnf {
        if value {
            absorbed(
                self.0
                    .iter()
                    .map(|c| c.iter().filter(|e| e.as_str() != var).cloned().collect())
                    .collect(),
            )
        } else {
            Dnf(self.0.iter().filter(|c| !c.contains(var)).cloned().collect())
        }
    }
}

fn absorbed(set: BTreeSet<Conjunct>) -> Dnf {
    let mut by_size: Vec<Conjunct> = set.into_iter().collect();
    by_size.sort_by_key(|c| c.len());
    let mut kept: Vec<Conjunct> = Vec::new();
    for c in by_size {
        if !kept.iter().any(|k| k.is_subset(&c)) {
            kept.push(c);
        }
    }
    Dnf(kept.into_iter().collect())
}

impl fmt::Display for Dnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_false() {
            return f.write_str("false");
        }
        if self.is_true() {
            return f.write_str("true");
        }
        let many = self.0.len() > 1;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("∨")?;
            }
            let body = c.iter().map(String::as_str).collect::<Vec<_>>().join("∧");
            if many && c.len() > 1 {
                write!(f, "({body})")?;
            } else {
                f.write_str(&body)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LineageError {
    #[error("formula has {vars} variables, above the limit of {limit}")]
    TooManyVariables { vars: usize, limit: usize },
    #[error("no probability for event `{0}`")]
    UnknownEvent(Event),
}

/// Exact probability of `f` when every event is independent, by Shannon
/// expansion over the formula's own variables.
pub fn formula_probability(f: &Dnf, probs: &BTreeMap<Event, f64>, limit: usize) -> Result<f64, LineageError> {
    let vars = f.variables();
    if vars.len() > limit {
        return Err(LineageError::TooManyVariables { vars: vars.len(), limit });
    }
    if let Some(missing) = vars.iter().find(|v| !probs.contains_key(*v)) {
        return Err(LineageError::UnknownEvent(missing.clone()));
    }
    let mut memo = BTreeMap::new();
    Ok(shannon(f, probs, &mut memo))
}

fn shannon(f: &Dnf, probs: &BTreeMap<Event, f64>, memo: &mut BTreeMap<Dnf, f64>) -> f64 {
    if f.is_false() {
        return 0.0;
    }
    if f.is_true() {
        return 1.0;
    }
    if f.0.len() == 1 {
        return f.0.iter().next().unwrap().iter().map(|e| probs[e]).product();
    }
    if let Some(&p) = memo.get(f) {
        return p;
    }
    // Branch on the variable shared by the most conjuncts.
    let mut counts: BTreeMap<&Event, usize> = BTreeMap::new();
    for e in f.0.iter().flatten() {
        *counts.entry(e).or_default() += 1;
    }
    let var = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(e, _)| (*e).clone()).unwrap();
    let p = probs[&var];
    let result = p * shannon(&f.condition(&var, true), probs, memo)
        + (1.0 - p) * shannon(&f.condition(&var, false), probs, memo);
    memo.insert(f.clone(), result);
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(pairs: &[(&str, f64)]) -> BTreeMap<Event, f64> {
        pairs.iter().map(|(e, p)| (e.to_string(), *p)).collect()
    }

    /// Sums the weights of satisfying assignments over the formula's variables.
    fn truth_table(f: &Dnf, probs: &BTreeMap<Event, f64>) -> f64 {
        let vars: Vec<Event> = f.variables().into_iter().collect();
        let mut total = 0.0;
        for mask in 0u64..(1 << vars.len()) {
            let on = |e: &str| vars.iter().position(|v| v == e).is_some_and(|i| mask & (1 << i) != 0);
            if f.eval(&on) {
                total += vars
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if mask & (1 << i) != 0 { probs[v] } else { 1.0 - probs[v] })
                    .product::<f64>();
            }
        }
        total
    }

    #[test]
    fn worked_example_tuple_one_one() {
        let f = Dnf::from_conjuncts([["d1", "r1", "e1"], ["d1", "r1", "e2"]]);
        let p = probs(&[("d1", 0.5), ("r1", 0.5), ("e1", 0.6), ("e2", 0.9)]);
        let expected = truth_table(&f, &p);
        assert!((expected - 0.24).abs() < 1e-12);
        assert!((formula_probability(&f, &p, DEFAULT_VARIABLE_LIMIT).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn single_literal() {
        let f = Dnf::literal("x");
        assert!((formula_probability(&f, &probs(&[("x", 0.7)]), 24).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn dependent_conjuncts_differ_from_independent_rule() {
        // x∧y ∨ x∧z shares x, so 1 - Π(1 - p_conjunct) overcounts.
        let f = Dnf::from_conjuncts([["x", "y"], ["x", "z"]]);
        let p = probs(&[("x", 0.5), ("y", 0.5), ("z", 0.5)]);
        let exact = formula_probability(&f, &p, 24).unwrap();
        assert!((exact - truth_table(&f, &p)).abs() < 1e-12);
        let naive = 1.0 - (1.0 - 0.25) * (1.0 - 0.25);
        assert!((exact - naive).abs() > 1e-3);
        // Disjoint variables: the independent rule is exact.
        let g = Dnf::from_conjuncts([["x", "y"], ["z", "w"]]);
        let q = probs(&[("x", 0.3), ("y", 0.6), ("z", 0.9), ("w", 0.2)]);
        let rule = 1.0 - (1.0 - 0.18) * (1.0 - 0.18);
        assert!((formula_probability(&g, &q, 24).unwrap() - rule).abs() < 1e-12);
    }

    #[test]
    fn limits_and_constants() {
        let wide = Dnf::from_conjuncts((0..5).map(|i| [format!("v{i}")]));
        let p: BTreeMap<Event, f64> = (0..5).map(|i| (format!("v{i}"), 0.5)).collect();
        assert_eq!(
            formula_probability(&wide, &p, 4),
            Err(LineageError::TooManyVariables { vars: 5, limit: 4 })
        );
        assert_eq!(formula_probability(&Dnf::truth(), &p, 4), Ok(1.0));
        assert_eq!(formula_probability(&Dnf::falsity(), &p, 4), Ok(0.0));
        assert_eq!(
            formula_probability(&Dnf::literal("nope"), &p, 4),
            Err(LineageError::UnknownEvent("nope".into()))
        );
    }

    #[test]
    fn algebra_and_display() {
        let a = Dnf::literal("a");
        let b = Dnf::literal("b");
        let ab = a.and(&b);
        assert_eq!(ab.to_string(), "a∧b");
        assert_eq!(ab.or(&a), a, "absorption");
        assert_eq!(a.or(&b).to_string(), "a∨b");
        assert_eq!(ab.or(&Dnf::literal("c").and(&a)).to_string(), "(a∧b)∨(a∧c)");
        assert_eq!(a.and(&Dnf::truth()), a);
        assert!(a.and(&Dnf::falsity()).is_false());
    }
}
