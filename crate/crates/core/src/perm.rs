//! Permutation combinatorics: divisions of a permutation into increasing
//! blocks, the sets of permutations admitting such divisions, Stirling
//! numbers of the second kind and block shuffles.

use std::fmt;

use itertools::Itertools;
use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermError {
    #[error("block count l={l} out of range 1..={len}")]
    BlockCount { l: usize, len: usize },
    #[error("first entry i={i} out of range 1..={n}")]
    FirstEntry { i: usize, n: usize },
    #[error("block sizes sum to {sum}, expected {expected}")]
    BlockSizes { sum: usize, expected: usize },
    #[error("block sizes must be positive")]
    EmptyBlock,
    #[error("permutation entries must be distinct and nonempty")]
    NotAPermutation,
}

/// A permutation written in one-line notation over an ordered symbol set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Perm(Vec<u32>);

impl Perm {
    pub fn new(image: Vec<u32>) -> Result<Perm, PermError> {
        if image.is_empty() || !image.iter().all_unique() {
            return Err(PermError::NotAPermutation);
        }
        Ok(Perm(image))
    }

    pub fn identity(n: usize) -> Perm {
        Perm((1..=n as u32).collect())
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> u32 {
        self.0[0]
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.iter().join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermStats {
    pub perm: Perm,
    pub l: usize,
    pub d: u64,
}

/// Number of ways to cut `p` into exactly `l` nonempty contiguous strictly
/// increasing blocks.
pub fn count_divisions(p: &Perm, l: usize) -> Result<u64, PermError> {
    let len = p.len();
    if l < 1 || l > len {
        return Err(PermError::BlockCount { l, len });
    }
    Ok(division_counts(p.as_slice())[l])
}

/// `counts[l]` for every `l` in `0..=len`, by a cut DP.
///
/// `ways[j][b]` counts cuttings of the prefix of length `j` into `b` blocks.
/// A block `s..j` is admissible iff it is strictly increasing, i.e. no
/// descent lies strictly inside it.
pub fn division_counts(p: &[u32]) -> Vec<u64> {
    let len = p.len();
    // run_start[j]: smallest s such that p[s..j] is increasing (j >= 1)
    let mut run_start = vec![0usize; len + 1];
    for j in 2..=len {
        run_start[j] = if p[j - 2] < p[j - 1] { run_start[j - 1] } else { j - 1 };
    }
    let mut ways = vec![vec![0u64; len + 1]; len + 1];
    ways[0][0] = 1;
    for j in 1..=len {
        for s in run_start[j]..j {
            for b in 0..j {
                let w = ways[s][b];
                if w != 0 {
                    ways[j][b + 1] += w;
                }
            }
        }
    }
    ways.swap_remove(len)
}

/// Every permutation of `1..=n` with a positive division count, in
/// lexicographic order.
pub fn sigma_ln(n: usize, l: usize) -> Result<Vec<PermStats>, PermError> {
    if l < 1 || l > n {
        return Err(PermError::BlockCount { l, len: n });
    }
    Ok(all_with_counts(n, l).filter(|s| s.d > 0).collect())
}

/// The members of [`sigma_ln`] whose first entry is `i`.
pub fn sigma_ln_at(n: usize, l: usize, i: usize) -> Result<Vec<PermStats>, PermError> {
    if l < 1 || l > n {
        return Err(PermError::BlockCount { l, len: n });
    }
    if i < 1 || i > n {
        return Err(PermError::FirstEntry { i, n });
    }
    Ok(all_with_counts(n, l).filter(|s| s.d > 0 && s.perm.first() as usize == i).collect())
}

/// All `n!` permutations in lexicographic order paired with `d_l`, zeros included.
pub fn all_with_counts(n: usize, l: usize) -> impl Iterator<Item = PermStats> {
    (1..=n as u32).permutations(n).map(move |v| {
        let d = division_counts(&v)[l];
        PermStats { perm: Perm(v), l, d }
    })
}

/// Stirling numbers of the second kind, `S(n, l)`.
pub fn stirling2(n: usize, l: usize) -> BigUint {
    if l > n {
        return BigUint::zero();
    }
    let mut row = vec![BigUint::zero(); l + 1];
    row[0] = BigUint::one();
    for _ in 1..=n {
        for j in (1..=l).rev() {
            let carried = &row[j] * BigUint::from(j);
            row[j] = carried + &row[j - 1];
        }
        row[0] = BigUint::zero();
    }
    row.swap_remove(l)
}

pub fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// All permutations of `symbols` (taken in increasing order) whose
/// consecutive blocks of the given sizes are increasing: the
/// `[i_1,...,i_l]`-shuffles in one-line notation.
pub fn shuffles_on(block_sizes: &[usize], symbols: &[u32]) -> Result<Vec<Perm>, PermError> {
    if block_sizes.contains(&0) {
        return Err(PermError::EmptyBlock);
    }
    let sum: usize = block_sizes.iter().sum();
    if sum != symbols.len() {
        return Err(PermError::BlockSizes { sum, expected: symbols.len() });
    }
    let mut sorted = symbols.to_vec();
    sorted.sort_unstable();
    if !sorted.iter().all_unique() {
        return Err(PermError::NotAPermutation);
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(sum);
    distribute(block_sizes, &sorted, &mut current, &mut out);
    out.sort();
    Ok(out)
}

/// Shuffles on the symbol set `1..=sum(block_sizes)`.
pub fn shuffles(block_sizes: &[usize]) -> Result<Vec<Perm>, PermError> {
    let total: usize = block_sizes.iter().sum();
    let symbols: Vec<u32> = (1..=total as u32).collect();
    shuffles_on(block_sizes, &symbols)
}

fn distribute(sizes: &[usize], remaining: &[u32], current: &mut Vec<u32>, out: &mut Vec<Perm>) {
    let Some((&size, rest)) = sizes.split_first() else {
        out.push(Perm(current.clone()));
        return;
    };
    for chosen in remaining.iter().copied().combinations(size) {
        let left: Vec<u32> = remaining.iter().copied().filter(|s| !chosen.contains(s)).collect();
        let mark = current.len();
        current.extend_from_slice(&chosen);
        distribute(rest, &left, current, out);
        current.truncate(mark);
    }
}

/// Compositions of `total` into exactly `parts` positive summands.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if total < parts {
        return vec![];
    }
    // choose parts-1 cut points among total-1 gaps
    (1..total)
        .combinations(parts - 1)
        .map(|cuts| {
            let mut prev = 0;
            let mut sizes = Vec::with_capacity(parts);
            for c in cuts.into_iter().chain(std::iter::once(total)) {
                sizes.push(c - prev);
                prev = c;
            }
            sizes
        })
        .collect()
}
