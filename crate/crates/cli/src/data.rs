//! Loading databases, queries and plans.

use std::path::Path;

use anyhow::{bail, Context, Result};

use mrlab_core::fixtures;
use mrlab_core::optimizer::Catalog;
use mrlab_core::plan::Plan;
use mrlab_core::prob::ProbDatabase;
use mrlab_core::query::{parse_query, ConjunctiveQuery};
use mrlab_core::relation::Relation;

use crate::QueryInput;

pub const CATALOG_FILE: &str = "catalog.tsv";

pub struct Workspace {
    pub db: ProbDatabase,
    pub catalog: Catalog,
    pub builtin: bool,
}

impl Workspace {
    /// Every `*.tsv` in `dir` except the catalog is a relation named after
    /// the file stem. Without a catalog file, exact statistics are computed
    /// from the data.
    pub fn load(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            let db = fixtures::example_db();
            return Ok(Self { catalog: Catalog::from_db(&db), db, builtin: true });
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.sort();
        let mut relations = Vec::new();
        let mut catalog = None;
        for p in paths {
            if p.extension().and_then(|e| e.to_str()) != Some("tsv") {
                continue;
            }
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let name = p.file_stem().and_then(|s| s.to_str()).context("relation file name is not UTF-8")?;
            if p.file_name().and_then(|s| s.to_str()) == Some(CATALOG_FILE) {
                catalog = Some(Catalog::parse(&text).with_context(|| format!("in {}", p.display()))?);
            } else {
                relations.push(Relation::from_tsv(name, &text).with_context(|| format!("in {}", p.display()))?);
            }
        }
        if relations.is_empty() {
            bail!("no relation files in {}", dir.display());
        }
        let db = ProbDatabase::new(relations)?;
        let catalog = match catalog {
            Some(c) => c,
            None => {
                eprintln!("no {CATALOG_FILE}, using exact statistics");
                Catalog::from_db(&db)
            }
        };
        Ok(Self { db, catalog, builtin: false })
    }

    pub fn query(&self, input: &QueryInput) -> Result<ConjunctiveQuery> {
        let text = match (&input.query, &input.query_file) {
            (Some(t), _) => t.clone(),
            (None, Some(p)) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            (None, None) if self.builtin => return Ok(fixtures::q_e()),
            (None, None) => bail!("--query or --query-file is required with --db"),
        };
        Ok(parse_query(&text, &self.db.schemas())?)
    }
}

/// `P1` and `P2` name the built-in employee plans; anything else is a file
/// holding plan text.
pub fn load_plan(arg: &str) -> Result<Plan> {
    match arg.to_ascii_uppercase().as_str() {
        "P1" => return Ok(fixtures::p1()),
        "P2" => return Ok(fixtures::p2()),
        _ => {}
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("reading plan file {arg}"))?;
    Plan::parse(text.trim()).with_context(|| format!("in plan file {arg}"))
}
