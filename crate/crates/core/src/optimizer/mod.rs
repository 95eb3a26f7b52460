//! Cost-based choice among safe plans.

pub mod catalog;
pub mod estimate;
pub mod physical;
pub mod rewrite;

pub use catalog::{Catalog, CatalogError};
pub use estimate::{estimate_size, upper_bound_size, Estimate};
pub use physical::{estimate_plan_cost, execute_physical, opt_phy_plan, Job, Memo, Pattern, PhysicalPlan};
pub use rewrite::{apply_sure_rules, generate_equivalents, Equivalents, Law};

use crate::plan::{Plan, SchemaMap};
use crate::query::ConjunctiveQuery;
use crate::safety::{safe_plan, SafetyChecker, SafetyError};
#[cfg(test)]
use crate::safety::plan_is_safe;

pub const DEFAULT_SEARCH_BOUND: usize = 5000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptError {
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone)]
pub struct BestPlan {
    /// The generator's plan before any rewriting.
    pub initial: Plan,
    pub initial_cost: f64,
    pub logical: Plan,
    pub physical: PhysicalPlan,
    pub cost: f64,
    pub explored: usize,
    pub truncated: bool,
}

fn cost_of(p: &Plan, catalog: &Catalog, memo: &Memo) -> Result<f64, CatalogError> {
    Ok(opt_phy_plan(p, catalog, memo)?.cost)
}

/// Repeatedly takes the cheapest safe single application of law 6 until
/// none lowers the cost.
pub fn push_projections(p: &Plan, catalog: &Catalog, schemas: &SchemaMap, memo: &Memo) -> Result<Plan, OptError> {
    push_projections_with(p, catalog, schemas, memo, &SafetyChecker::new(schemas, &catalog.fds))
}

fn push_projections_with(
    p: &Plan,
    catalog: &Catalog,
    schemas: &SchemaMap,
    memo: &Memo,
    checker: &SafetyChecker,
) -> Result<Plan, OptError> {
    let mut cur = p.clone();
    let mut cur_cost = cost_of(&cur, catalog, memo)?;
    loop {
        let mut best: Option<(f64, Plan)> = None;
        for cand in rewrite::rewrite_anywhere(&cur, &[Law::PushProjectBelowJoin], schemas) {
            if !checker.is_safe(&cand)? {
                continue;
            }
            let c = cost_of(&cand, catalog, memo)?;
            if c < cur_cost && best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, cand));
            }
        }
        match best {
            Some((c, p)) => {
                cur = p;
                cur_cost = c;
            }
            None => return Ok(cur),
        }
    }
}

/// Safe plan, sure rules, cost-checked projection pushing, then the
/// cheapest plan among the bounded sets of safe equivalents of the safe and
/// pushed plans. Ties go to the smallest serialization.
pub fn find_best_plan(
    q: &ConjunctiveQuery,
    catalog: &Catalog,
    schemas: &SchemaMap,
    bound: usize,
) -> Result<BestPlan, OptError> {
    let memo = Memo::new();
    let initial = safe_plan(q, &catalog.fds)?;
    let sure = apply_sure_rules(&initial, schemas);
    let checker = SafetyChecker::new(schemas, &catalog.fds);
    let pushed = push_projections_with(&sure, catalog, schemas, &memo, &checker)?;
    // Cascading projections is one-way, so the pushed plan alone can miss
    // shapes that keep an intermediate projection.
    let from_initial = rewrite::generate_equivalents_with(&initial, bound, schemas, &checker);
    let from_pushed = rewrite::generate_equivalents_with(&pushed, bound, schemas, &checker);
    let mut candidates = vec![initial.clone(), sure, pushed];
    candidates.extend(from_initial.plans.iter().cloned());
    candidates.extend(from_pushed.plans.iter().cloned());
    let explored = candidates.iter().collect::<std::collections::HashSet<_>>().len();
    let mut best: Option<(f64, String, Plan)> = None;
    for p in candidates {
        let c = cost_of(&p, catalog, &memo)?;
        let key = p.to_string();
        let better = match &best {
            None => true,
            Some((bc, bk, _)) => c < *bc || (c == *bc && key < *bk),
        };
        if better {
            best = Some((c, key, p));
        }
    }
    let (cost, _, logical) = best.expect("at least the initial plan");
    let physical = opt_phy_plan(&logical, catalog, &memo)?.physical.clone();
    Ok(BestPlan {
        initial_cost: cost_of(&initial, catalog, &memo)?,
        initial,
        logical,
        physical,
        cost,
        explored,
        truncated: from_initial.truncated || from_pushed.truncated,
    })
}
