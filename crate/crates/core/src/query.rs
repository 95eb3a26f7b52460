//! Conjunctive queries and their SQL-like text form.
//!
//! ```text
//! SELECT DISTINCT e.did AS 'Dept ID', e.rid
//! FROM Emp AS e, Dept AS d, Rank r
//! WHERE e.did = d.did AND e.rid = r.rid AND d.dname = 'R&D'
//! ```
//!
//! Only equality conjunctions are accepted. Output-column aliases are
//! parsed and dropped.

use std::collections::BTreeMap;
use std::fmt;

use crate::plan::{Attr, SchemaMap};
use crate::relation::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelRef {
    pub name: String,
    pub attrs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    /// Rels(q) in declaration order.
    pub rels: Vec<RelRef>,
    pub head: Vec<Attr>,
    pub join_preds: Vec<(Attr, Attr)>,
    pub sel_preds: Vec<(Attr, Value)>,
}

impl ConjunctiveQuery {
    /// Attr(q) in declaration order.
    pub fn attrs(&self) -> Vec<Attr> {
        self.rels
            .iter()
            .flat_map(|r| r.attrs.iter().map(move |a| Attr::new(r.name.clone(), a.clone())))
            .collect()
    }

    pub fn schemas(&self) -> SchemaMap {
        self.rels.iter().map(|r| (r.name.clone(), r.attrs.clone())).collect()
    }

    pub fn rel_names(&self) -> Vec<&str> {
        self.rels.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn has_attr(&self, a: &Attr) -> bool {
        self.rels.iter().any(|r| r.name == a.rel && r.attrs.contains(&a.name))
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = self.head.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ");
        let from = self.rels.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ");
        write!(f, "SELECT DISTINCT {head} FROM {from}")?;
        let mut preds: Vec<String> = self.join_preds.iter().map(|(a, b)| format!("{a} = {b}")).collect();
        preds.extend(self.sel_preds.iter().map(|(a, v)| match v {
            Value::Int(i) => format!("{a} = {i}"),
            Value::Str(s) => format!("{a} = '{}'", s.replace('\'', "''")),
        }));
        if !preds.is_empty() {
            write!(f, " WHERE {}", preds.join(" AND "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("query error at {pos}: {msg}")]
pub struct QueryError {
    pub pos: usize,
    pub msg: String,
}

fn qerr(pos: usize, msg: impl Into<String>) -> QueryError {
    QueryError { pos, msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        if c.is_alphabetic() || c == '_' {
            let len = text[i..]
                .char_indices()
                .find(|&(_, ch)| !(ch.is_alphanumeric() || ch == '_'))
                .map_or(text.len() - i, |(j, _)| j);
            out.push((start, Tok::Ident(text[i..i + len].to_string())));
            i += len;
        } else if c.is_ascii_digit() || (c == '-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let len = text[i + 1..]
                .char_indices()
                .find(|&(_, ch)| !ch.is_ascii_digit())
                .map_or(text.len() - i - 1, |(j, _)| j)
                + 1;
            let n = text[i..i + len].parse::<i64>().map_err(|_| qerr(start, "integer out of range"))?;
            out.push((start, Tok::Int(n)));
            i += len;
        } else if c == '\'' {
            let mut value = String::new();
            let mut j = i + 1;
            loop {
                let Some(ch) = text[j..].chars().next() else {
                    return Err(qerr(start, "unterminated string"));
                };
                j += ch.len_utf8();
                if ch == '\'' {
                    if text[j..].starts_with('\'') {
                        value.push('\'');
                        j += 1;
                    } else {
                        break;
                    }
                } else {
                    value.push(ch);
                }
            }
            out.push((start, Tok::Str(value)));
            i = j;
        } else {
            let sym = ["<=", ">=", "<>", "!=", "=", "<", ">", ",", ".", ";", "(", ")", "*"]
                .into_iter()
                .find(|s| text[i..].starts_with(s))
                .ok_or_else(|| qerr(start, format!("unexpected character `{c}`")))?;
            out.push((start, Tok::Sym(sym)));
            i += sym.len();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct ColRef {
    pos: usize,
    qualifier: Option<String>,
    name: String,
}

#[derive(Debug, Clone)]
enum Term {
    Col(ColRef),
    Const(usize, Value),
}

/// Syntax tree before names are resolved against a schema.
#[derive(Debug, Clone)]
pub struct QueryAst {
    select: Vec<ColRef>,
    from: Vec<(usize, String, Option<String>)>,
    preds: Vec<(Term, Term)>,
}

impl QueryAst {
    pub fn num_relations(&self) -> usize {
        self.from.len()
    }

    /// Predicates comparing two columns.
    pub fn num_join_predicates(&self) -> usize {
        self.preds.iter().filter(|(a, b)| matches!((a, b), (Term::Col(_), Term::Col(_)))).count()
    }

    pub fn num_outputs(&self) -> usize {
        self.select.len()
    }
}

const KEYWORDS: [&str; 7] = ["SELECT", "DISTINCT", "FROM", "WHERE", "AND", "AS", "OR"];

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |(p, _)| *p)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(_, t)| t)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        self.i += usize::from(hit);
        hit
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(qerr(self.pos(), format!("expected {kw}")))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym);
        self.i += usize::from(hit);
        hit
    }

    fn ident(&mut self, what: &str) -> Result<String, QueryError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(qerr(self.pos(), format!("expected {what}"))),
        }
    }

    fn colref(&mut self) -> Result<ColRef, QueryError> {
        let pos = self.pos();
        let first = self.ident("column")?;
        if self.eat_sym(".") {
            let name = self.ident("column name")?;
            Ok(ColRef { pos, qualifier: Some(first), name })
        } else {
            Ok(ColRef { pos, qualifier: None, name: first })
        }
    }

    fn term(&mut self) -> Result<Term, QueryError> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::Int(n)) => {
                let v = Value::Int(*n);
                self.i += 1;
                Ok(Term::Const(pos, v))
            }
            Some(Tok::Str(s)) => {
                let v = Value::Str(s.clone());
                self.i += 1;
                Ok(Term::Const(pos, v))
            }
            _ => Ok(Term::Col(self.colref()?)),
        }
    }

    fn query(&mut self) -> Result<QueryAst, QueryError> {
        self.expect_kw("SELECT")?;
        self.eat_kw("DISTINCT");
        let mut select = Vec::new();
        loop {
            select.push(self.colref()?);
            if self.eat_kw("AS") {
                match self.peek() {
                    Some(Tok::Str(_)) => self.i += 1,
                    _ => {
                        self.ident("output alias")?;
                    }
                }
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_kw("FROM")?;
        let mut from = Vec::new();
        loop {
            let pos = self.pos();
            let rel = self.ident("relation name")?;
            let bare_alias = matches!(self.peek(), Some(Tok::Ident(s)) if !KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k)));
            let alias = if self.eat_kw("AS") || bare_alias {
                Some(self.ident("relation alias")?)
            } else {
                None
            };
            from.push((pos, rel, alias));
            if !self.eat_sym(",") {
                break;
            }
        }
        let mut preds = Vec::new();
        if self.eat_kw("WHERE") {
            loop {
                let left = self.term()?;
                let pos = self.pos();
                match self.peek() {
                    Some(Tok::Sym("=")) => self.i += 1,
                    Some(Tok::Sym(s)) if ["<", ">", "<=", ">=", "<>", "!="].contains(s) => {
                        return Err(qerr(pos, format!("only equality predicates are supported, found `{s}`")));
                    }
                    _ => return Err(qerr(pos, "expected `=`")),
                }
                let right = self.term()?;
                preds.push((left, right));
                if self.is_kw("OR") {
                    return Err(qerr(self.pos(), "OR is not supported; predicates must be a conjunction"));
                }
                if !self.eat_kw("AND") {
                    break;
                }
            }
        }
        self.eat_sym(";");
        if self.i != self.toks.len() {
            return Err(qerr(self.pos(), "unexpected input after query"));
        }
        Ok(QueryAst { select, from, preds })
    }
}

/// Parses query text without resolving names.
pub fn parse_query_syntax(text: &str) -> Result<QueryAst, QueryError> {
    let toks = tokenize(text)?;
    Parser { toks, i: 0, end: text.len() }.query()
}

/// Parses and resolves query text against relation schemas.
pub fn parse_query(text: &str, schemas: &SchemaMap) -> Result<ConjunctiveQuery, QueryError> {
    resolve(&parse_query_syntax(text)?, schemas)
}

pub fn resolve(ast: &QueryAst, schemas: &SchemaMap) -> Result<ConjunctiveQuery, QueryError> {
    let mut rels: Vec<RelRef> = Vec::new();
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    for (pos, rel, alias) in &ast.from {
        let attrs = schemas.get(rel).ok_or_else(|| qerr(*pos, format!("unknown relation `{rel}`")))?;
        if rels.iter().any(|r| &r.name == rel) {
            return Err(qerr(*pos, format!("relation `{rel}` appears twice; self-joins are not supported")));
        }
        rels.push(RelRef { name: rel.clone(), attrs: attrs.clone() });
        for n in std::iter::once(rel).chain(alias) {
            if names.insert(n.clone(), rel.clone()).is_some_and(|prev| &prev != rel) {
                return Err(qerr(*pos, format!("name `{n}` is ambiguous")));
            }
        }
    }
    let col = |c: &ColRef| -> Result<Attr, QueryError> {
        match &c.qualifier {
            Some(q) => {
                let rel = names.get(q).ok_or_else(|| qerr(c.pos, format!("unknown relation or alias `{q}`")))?;
                if !schemas[rel].contains(&c.name) {
                    return Err(qerr(c.pos, format!("relation `{rel}` has no attribute `{}`", c.name)));
                }
                Ok(Attr::new(rel.clone(), c.name.clone()))
            }
            None => {
                let owners: Vec<&RelRef> = rels.iter().filter(|r| r.attrs.contains(&c.name)).collect();
                match owners.as_slice() {
                    [one] => Ok(Attr::new(one.name.clone(), c.name.clone())),
                    [] => Err(qerr(c.pos, format!("unknown attribute `{}`", c.name))),
                    _ => Err(qerr(c.pos, format!("attribute `{}` is ambiguous", c.name))),
                }
            }
        }
    };
    let mut head = Vec::new();
    for c in &ast.select {
        let a = col(c)?;
        if !head.contains(&a) {
            head.push(a);
        }
    }
    let mut join_preds = Vec::new();
    let mut sel_preds = Vec::new();
    for (l, r) in &ast.preds {
        match (l, r) {
            (Term::Col(a), Term::Col(b)) => join_preds.push((col(a)?, col(b)?)),
            (Term::Col(a), Term::Const(_, v)) | (Term::Const(_, v), Term::Col(a)) => sel_preds.push((col(a)?, v.clone())),
            (Term::Const(pos, _), Term::Const(..)) => return Err(qerr(*pos, "predicate compares two constants")),
        }
    }
    Ok(ConjunctiveQuery { rels, head, join_preds, sel_preds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    pub const Q_E: &str = "SELECT
	DISTINCT
	e.did AS 'Dept ID',
	e.rid AS 'Rank ID'
FROM
	Emp  AS e,
	Dept AS d,
	Rank AS r
WHERE
	e.did = d.did AND
	e.rid = r.rid";

    #[test]
    fn example_query() {
        let db = fixtures::example_db();
        let q = parse_query(Q_E, &db.schemas()).unwrap();
        assert_eq!(q.rel_names(), vec!["Emp", "Dept", "Rank"]);
        assert_eq!(q.join_preds.len(), 2);
        assert_eq!(q.head, vec![Attr::new("Emp", "did"), Attr::new("Emp", "rid")]);
        assert_eq!(q, fixtures::q_e());
    }

    #[test]
    fn movies_query_literal_text() {
        let text = "SELECT
		    movie.mid,actor.aid
		FROM
		    movies       as m,
		    actors       as a,
		    movie_actors as m_a
		WHERE
		    movie_actors.mid = movies.mid AND
		    movie_actors.aid = actors.mid";
        let ast = parse_query_syntax(text).unwrap();
        assert_eq!(ast.num_relations(), 3);
        assert_eq!(ast.num_join_predicates(), 2);
        assert_eq!(ast.num_outputs(), 2);
        // `movie` is neither a relation nor an alias.
        let err = resolve(&ast, &fixtures::movie_schemas()).unwrap_err();
        assert!(err.msg.contains("movie"), "{err}");
    }

    #[test]
    fn movies_query_resolved() {
        let text = "SELECT m.mid, a.aid FROM movies AS m, actors AS a, movie_actors AS m_a \
                    WHERE m_a.mid = m.mid AND m_a.aid = a.aid";
        let q = parse_query(text, &fixtures::movie_schemas()).unwrap();
        assert_eq!(q.rels.len(), 3);
        assert_eq!(q.join_preds.len(), 2);
    }

    #[test]
    fn malformed_queries_report_positions() {
        let s = fixtures::example_db().schemas();
        let e = parse_query_syntax("SELECT DISTINCT m.mid, a.aid FROM movies m?").unwrap_err();
        assert_eq!(e.pos, 42);
        let e = parse_query("SELECT Emp.did FROM Emp WHERE Emp.did < 3", &s).unwrap_err();
        assert_eq!(e.pos, 38);
        assert!(e.msg.contains("equality"));
        let e = parse_query("SELECT Emp.did FROM Emp WHERE Emp.did = 3 OR Emp.did = 4", &s).unwrap_err();
        assert!(e.msg.contains("OR"));
        assert_eq!(e.pos, 42);
        let e = parse_query("SELECT x FROM Emp", &s).unwrap_err();
        assert_eq!((e.pos, e.msg.as_str()), (7, "unknown attribute `x`"));
        let e = parse_query("SELECT did FROM Emp, Dept", &s).unwrap_err();
        assert!(e.msg.contains("ambiguous"));
        let e = parse_query("SELECT did FROM Nope", &s).unwrap_err();
        assert_eq!(e.pos, 16);
        assert!(parse_query("SELECT Emp.did FROM Emp, Emp", &s).is_err());
        assert!(parse_query("SELECT FROM Emp", &s).is_err());
    }

    #[test]
    fn selections_and_unqualified_names() {
        let s = fixtures::example_db().schemas();
        let q = parse_query("select distinct dname from Dept where 'R&D' = dname and did = 1;", &s).unwrap();
        assert_eq!(q.head, vec![Attr::new("Dept", "dname")]);
        assert_eq!(
            q.sel_preds,
            vec![(Attr::new("Dept", "dname"), Value::from("R&D")), (Attr::new("Dept", "did"), Value::Int(1))]
        );
    }

    #[test]
    fn serialization_round_trips() {
        let db = fixtures::example_db();
        let s = db.schemas();
        for text in [
            Q_E,
            "SELECT Dept.dname FROM Dept WHERE Dept.dname = 'it''s' AND Dept.did = -2",
            "SELECT Emp.name, Rank.rname FROM Emp, Rank WHERE Emp.rid = Rank.rid",
        ] {
            let q = parse_query(text, &s).unwrap();
            assert_eq!(parse_query(&q.to_string(), &s).unwrap(), q);
        }
    }
}
