use super::itemset::{Itemset, TransactionDb};

/// Tids of the transactions containing `x`. `g(∅)` is every tid.
pub fn galois_g(x: &Itemset, db: &TransactionDb) -> Vec<usize> {
    db.transactions()
        .iter()
        .filter(|t| x.is_subset_of(&t.items))
        .map(|t| t.tid)
        .collect()
}

/// Items common to the given transactions. An empty intersection is taken
/// over no sets, so `f(∅)` is every item of the database.
pub fn galois_f(tids: &[usize], db: &TransactionDb) -> Itemset {
    let mut acc: Option<Itemset> = None;
    for t in db.transactions().iter().filter(|t| tids.contains(&t.tid)) {
        acc = Some(match acc {
            None => t.items.clone(),
            Some(a) => a.intersection(&t.items),
        });
    }
    acc.unwrap_or_else(|| db.all_items())
}

/// `h = f ∘ g`.
pub fn closure_h(x: &Itemset, db: &TransactionDb) -> Itemset {
    galois_f(&galois_g(x, db), db)
}

pub fn support(x: &Itemset, db: &TransactionDb) -> usize {
    db.transactions().iter().filter(|t| x.is_subset_of(&t.items)).count()
}
