use std::collections::BTreeSet;
use std::fmt;

/// Item identifier. Ids are ranks in the lexicographic order of item tokens,
/// so comparing ids compares tokens.
pub type Item = u32;

/// Sorted, duplicate-free set of items.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Itemset(Vec<Item>);

impl Itemset {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_items(items: impl IntoIterator<Item = Item>) -> Self {
        let set: BTreeSet<Item> = items.into_iter().collect();
        Self(set.into_iter().collect())
    }

    pub fn items(&self) -> &[Item] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: Item) -> bool {
        self.0.binary_search(&item).is_ok()
    }

    pub fn is_subset_of(&self, other: &Itemset) -> bool {
        let mut it = other.0.iter();
        'outer: for x in &self.0 {
            for y in it.by_ref() {
                if y == x {
                    continue 'outer;
                }
                if y > x {
                    return false;
                }
            }
            return false;
        }
        true
    }

    pub fn intersection(&self, other: &Itemset) -> Itemset {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        Itemset(out)
    }

    pub fn with(&self, item: Item) -> Itemset {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&item) {
            v.insert(pos, item);
        }
        Itemset(v)
    }

    /// Items strictly smaller than `item`.
    pub fn below(&self, item: Item) -> Itemset {
        Itemset(self.0.iter().copied().take_while(|&x| x < item).collect())
    }
}

impl FromIterator<Item> for Itemset {
    fn from_iter<I: IntoIterator<Item = Item>>(iter: I) -> Self {
        Self::from_items(iter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tid: usize,
    pub items: Itemset,
}

/// Transactions plus the dictionary mapping item ids back to tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransactionDb {
    tokens: Vec<String>,
    transactions: Vec<Transaction>,
}

impl TransactionDb {
    /// Builds a database; transaction `i` gets tid `i + 1`.
    pub fn new<T, S>(transactions: impl IntoIterator<Item = T>) -> Self
    where
        T: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let raw: Vec<Vec<String>> = transactions
            .into_iter()
            .map(|t| t.into_iter().map(|s| s.as_ref().to_string()).collect())
            .collect();
        let tokens: Vec<String> = raw
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let transactions = raw
            .iter()
            .enumerate()
            .map(|(i, t)| Transaction {
                tid: i + 1,
                items: t
                    .iter()
                    .map(|s| tokens.binary_search(s).expect("token in dictionary") as Item)
                    .collect(),
            })
            .collect();
        Self { tokens, transactions }
    }

    /// One transaction per line, whitespace-separated tokens.
    pub fn parse(text: &str) -> Self {
        Self::new(text.lines().map(|l| l.split_whitespace()))
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn num_items(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, item: Item) -> &str {
        &self.tokens[item as usize]
    }

    pub fn item(&self, token: &str) -> Option<Item> {
        self.tokens.binary_search_by(|t| t.as_str().cmp(token)).ok().map(|i| i as Item)
    }

    /// Looks up every token; `None` if any is unknown.
    pub fn itemset(&self, tokens: &[&str]) -> Option<Itemset> {
        tokens.iter().map(|t| self.item(t)).collect::<Option<Vec<_>>>().map(Itemset::from_items)
    }

    pub fn all_items(&self) -> Itemset {
        Itemset((0..self.tokens.len() as Item).collect())
    }

    pub fn longest_transaction(&self) -> usize {
        self.transactions.iter().map(|t| t.items.len()).max().unwrap_or(0)
    }

    /// Comma-joined tokens.
    pub fn format(&self, set: &Itemset) -> String {
        set.items().iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(",")
    }

    pub fn display<'a>(&'a self, set: &'a Itemset) -> impl fmt::Display + 'a {
        struct D<'a>(&'a TransactionDb, &'a Itemset);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{{{}}}", self.0.format(self.1))
            }
        }
        D(self, set)
    }
}
