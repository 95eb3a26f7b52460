use super::itemset::{Item, Itemset, TransactionDb};
use super::CfiError;

pub const DEFAULT_ITEM_LIMIT: usize = 20;

/// Every nonempty closed itemset with support at least `min_sup`, found by
/// enumerating all `2^|items|` itemsets. Sorted by itemset.
pub fn brute_force_closed(db: &TransactionDb, min_sup: u64, item_limit: usize) -> Result<Vec<(Itemset, u64)>, CfiError> {
    let n = db.num_items();
    if n > item_limit || n > 31 {
        return Err(CfiError::TooManyItems { items: n, limit: item_limit.min(31) });
    }
    let masks: Vec<u32> = db
        .transactions()
        .iter()
        .map(|t| t.items.items().iter().fold(0u32, |m, &i| m | (1 << i)))
        .collect();
    let all: u32 = if n == 0 { 0 } else { u32::MAX >> (32 - n) };
    let mut out = Vec::new();
    for x in 1..=all {
        let mut sup = 0u64;
        let mut closure = all;
        for &t in &masks {
            if t & x == x {
                sup += 1;
                closure &= t;
            }
        }
        if sup >= min_sup && closure == x {
            out.push((Itemset::from_items((0..n as Item).filter(|i| x & (1 << i) != 0)), sup));
        }
    }
    out.sort();
    Ok(out)
}
