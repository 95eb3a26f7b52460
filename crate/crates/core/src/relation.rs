//! Probabilistic relations and their TSV form.

use std::collections::BTreeSet;
use std::fmt;

use crate::engine::EngineError;
use crate::lineage::Dnf;

/// A scalar attribute value. Integers order numerically, strings
/// lexicographically, and every integer sorts before every string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    /// Integer if the text parses as one, string otherwise.
    pub fn parse(s: &str) -> Value {
        s.parse::<i64>().map(Value::Int).unwrap_or_else(|_| Value::Str(s.to_string()))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelError {
    #[error("unknown attribute `{attr}` in {relation}")]
    UnknownAttribute { attr: String, relation: String },
    #[error("duplicate attribute `{attr}` in {relation}")]
    DuplicateAttribute { attr: String, relation: String },
    #[error("projection needs at least one attribute")]
    EmptyProjection,
    #[error("{relation}: tuple has {got} values, schema has {expected}")]
    Arity { relation: String, expected: usize, got: usize },
    #[error("{relation}: probability {prob} outside [0, 1]")]
    Probability { relation: String, prob: f64 },
    #[error("{relation}: duplicate tuple ({values})")]
    DuplicateTuple { relation: String, values: String },
    #[error("{relation}: duplicate event `{event}`")]
    DuplicateEvent { relation: String, event: String },
    #[error("{relation} line {line}: {msg}")]
    Tsv { relation: String, line: usize, msg: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub name: String,
    pub attrs: Vec<String>,
}

impl Schema {
    pub fn new(name: impl Into<String>, attrs: Vec<String>) -> Result<Self, RelError> {
        let name = name.into();
        let mut seen = BTreeSet::new();
        for a in &attrs {
            if !seen.insert(a) {
                return Err(RelError::DuplicateAttribute { attr: a.clone(), relation: name });
            }
        }
        Ok(Self { name, attrs })
    }

    pub fn index(&self, attr: &str) -> Result<usize, RelError> {
        self.attrs.iter().position(|a| a == attr).ok_or_else(|| RelError::UnknownAttribute {
            attr: attr.to_string(),
            relation: self.name.clone(),
        })
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }
}

/// A tuple with its existence probability and lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTuple {
    pub values: Vec<Value>,
    pub prob: f64,
    pub lineage: Dnf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub schema: Schema,
    pub tuples: Vec<ProbTuple>,
}

impl Relation {
    pub fn new(schema: Schema, tuples: Vec<ProbTuple>) -> Result<Self, RelError> {
        for t in &tuples {
            if t.values.len() != schema.arity() {
                return Err(RelError::Arity {
                    relation: schema.name.clone(),
                    expected: schema.arity(),
                    got: t.values.len(),
                });
            }
            if !(0.0..=1.0).contains(&t.prob) {
                return Err(RelError::Probability { relation: schema.name.clone(), prob: t.prob });
            }
        }
        Ok(Self { schema, tuples })
    }

    /// A base relation: each row gets the event `<name>:<1-based row>`.
    pub fn base(name: &str, attrs: &[&str], rows: Vec<(Vec<Value>, f64)>) -> Result<Self, RelError> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (values, p))| (format!("{name}:{}", i + 1), values, p))
            .collect();
        Self::base_with_events(name, attrs, rows)
    }

    /// A base relation with explicit event names. Rows must be distinct and
    /// events unique.
    pub fn base_with_events(
        name: &str,
        attrs: &[&str],
        rows: Vec<(String, Vec<Value>, f64)>,
    ) -> Result<Self, RelError> {
        let schema = Schema::new(name, attrs.iter().map(|a| a.to_string()).collect())?;
        let mut seen_values = BTreeSet::new();
        let mut seen_events = BTreeSet::new();
        let mut tuples = Vec::with_capacity(rows.len());
        for (event, values, prob) in rows {
            if !seen_values.insert(values.clone()) {
                return Err(RelError::DuplicateTuple { relation: name.to_string(), values: join_values(&values) });
            }
            if !seen_events.insert(event.clone()) {
                return Err(RelError::DuplicateEvent { relation: name.to_string(), event });
            }
            tuples.push(ProbTuple { values, prob, lineage: Dnf::literal(event) });
        }
        Self::new(schema, tuples)
    }

    /// Parses the TSV form: a header of attribute names, optionally ending
    /// in `prob`, then one tuple per line. A missing `prob` column means 1.
    /// A leading `event` column names each tuple's event; otherwise events
    /// are `name:1`, `name:2`, ...
    pub fn from_tsv(name: &str, text: &str) -> Result<Self, RelError> {
        let tsv_err = |line: usize, msg: String| RelError::Tsv { relation: name.to_string(), line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| tsv_err(1, "missing header".into()))?;
        let mut attrs: Vec<&str> = header.split('\t').map(str::trim).collect();
        let has_prob = attrs.last() == Some(&"prob");
        if has_prob {
            attrs.pop();
        }
        let has_event = attrs.first() == Some(&"event");
        if has_event {
            attrs.remove(0);
        }
        let first = usize::from(has_event);
        let mut rows = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let expected = first + attrs.len() + usize::from(has_prob);
            if fields.len() != expected {
                return Err(tsv_err(i + 1, format!("expected {expected} fields, found {}", fields.len())));
            }
            let last = first + attrs.len();
            let prob = if has_prob {
                fields[last]
                    .parse::<f64>()
                    .map_err(|e| tsv_err(i + 1, format!("bad probability `{}`: {e}", fields[last])))?
            } else {
                1.0
            };
            let event = if has_event { fields[0].to_string() } else { format!("{name}:{}", rows.len() + 1) };
            rows.push((event, fields[first..last].iter().map(|f| Value::parse(f)).collect(), prob));
        }
        Self::base_with_events(name, &attrs, rows)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.schema.attrs.join("\t");
        out.push_str("\tprob\n");
        for t in &self.tuples {
            out.push_str(&t.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\t"));
            out.push_str(&format!("\t{}\n", format_prob(t.prob)));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Tuples with columns reordered by attribute name, sorted. Lets results
    /// of plans that differ only in column order be compared.
    pub fn canonical_rows(&self) -> Vec<(Vec<(String, Value)>, f64)> {
        let mut order: Vec<usize> = (0..self.schema.arity()).collect();
        order.sort_by(|&a, &b| self.schema.attrs[a].cmp(&self.schema.attrs[b]));
        let mut rows: Vec<(Vec<(String, Value)>, f64)> = self
            .tuples
            .iter()
            .map(|t| (order.iter().map(|&i| (self.schema.attrs[i].clone(), t.values[i].clone())).collect(), t.prob))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        rows
    }

    /// Probability of the tuple with exactly these values, if present.
    pub fn prob_of(&self, values: &[Value]) -> Option<f64> {
        self.tuples.iter().find(|t| t.values == values).map(|t| t.prob)
    }
}

fn join_values(values: &[Value]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Shortest decimal rendering with at most 10 fractional digits.
pub fn format_prob(p: f64) -> String {
    let s = format!("{p:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}
