use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::words::Expr;

/// Left-normalized commutator `[x_{e1}, ..., x_{ek}]` with distinct
/// entries and `e1 = min(entries)`. Weight one elements are generators.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasisCommutator {
    entries: Vec<u32>,
}

impl BasisCommutator {
    /// `None` unless the entries are distinct and start with their minimum.
    pub fn new(entries: Vec<u32>) -> Option<BasisCommutator> {
        let first = *entries.first()?;
        if !entries.iter().all_unique() || entries.iter().any(|&e| e < first || e == 0) {
            return None;
        }
        Some(BasisCommutator { entries })
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn weight(&self) -> usize {
        self.entries.len()
    }

    pub fn first(&self) -> u32 {
        self.entries[0]
    }

    pub fn last(&self) -> u32 {
        *self.entries.last().unwrap()
    }

    pub fn contains(&self, g: u32) -> bool {
        self.entries.contains(&g)
    }

    pub fn overlaps(&self, other: &BasisCommutator) -> bool {
        self.entries.iter().any(|e| other.entries.contains(e))
    }

    pub fn to_expr(&self) -> Expr {
        Expr::gen_bracket(&self.entries)
    }

    /// Sorted entry set; the primary sort key after weight.
    pub(crate) fn support(&self) -> Vec<u32> {
        let mut s = self.entries.clone();
        s.sort_unstable();
        s
    }
}

impl fmt::Display for BasisCommutator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.len() == 1 {
            write!(f, "x{}", self.entries[0])
        } else {
            write!(f, "[{}]", self.entries.iter().map(|e| format!("x{}", e)).join(","))
        }
    }
}

/// Canonical basis up to weight `max_weight`, ordered by weight, then
/// support (lexicographic), then the arrangement of the tail.
pub fn enumerate_basis(n: u32, max_weight: u32) -> Vec<BasisCommutator> {
    let mut out = Vec::new();
    for k in 1..=max_weight.min(n) as usize {
        for subset in (1..=n).combinations(k) {
            let (head, rest) = subset.split_first().unwrap();
            for tail in rest.iter().copied().permutations(rest.len()) {
                let mut entries = Vec::with_capacity(k);
                entries.push(*head);
                entries.extend(tail);
                out.push(BasisCommutator { entries });
            }
        }
    }
    debug_assert!(out
        .windows(2)
        .all(|w| { (w[0].weight(), w[0].support(), &w[0].entries) < (w[1].weight(), w[1].support(), &w[1].entries) }));
    out
}

/// `sum_{k=1..n} C(n,k) (k-1)!`.
pub fn expected_basis_size(n: u32) -> usize {
    let mut total = 0usize;
    let mut choose = 1usize;
    let mut fact = 1usize;
    for k in 1..=n as usize {
        choose = choose * (n as usize + 1 - k) / k;
        if k > 1 {
            fact *= k - 1;
        }
        total += choose * fact;
    }
    total
}
