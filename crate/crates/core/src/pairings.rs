//! Enumeration of pairings (perfect matchings) of finite index sets, with the
//! restricted classes that appear in Gaussian integration-by-parts
//! expansions.
//!
//! Labels are 1-based positive integers. Three classes are provided:
//! * all pairings of `J` (there are `(|J|−1)!!` of them),
//! * pairings excluding every "consecutive" pair `{2i−1, 2i}`,
//! * block-restricted pairings: with labels grouped into blocks
//!   `{Ni+1, …, Ni+N}`, each pair may contain at most one element per block.
//!   Two variants exist in the source material: one additionally imposes the
//!   consecutive-pair exclusion, the other does not. Both are implemented and
//!   [`class_count_report`] quantifies the difference.
//!
//! Enumeration is deterministic: pairs are stored as `(min, max)`, sorted by
//! first element, and pairings are produced in lexicographic order of that
//! representation (the recursion always pairs the smallest free label first).

use serde::{Deserialize, Serialize};

/// A perfect matching of an even-sized label set: disjoint unordered pairs
/// whose union is the base set. Stored canonically as `(min, max)` pairs
/// sorted by first element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    /// The pairs in canonical order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// True for the empty pairing (of the empty label set).
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The base set, sorted.
    pub fn base_set(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.sort_unstable();
        v
    }
}

/// Which pairings of a label set are admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairingClass {
    /// Every pairing.
    All,
    /// Pairings with no pair of the form `{2i−1, 2i}`.
    NoConsecutivePairs,
    /// At most one element of each block `{N·i+1, …, N·i+N}` per pair, and
    /// no consecutive pair `{2i−1, 2i}` (the appendix-style definition).
    BlockRestricted {
        /// Block size `N`.
        block_size: usize,
    },
    /// The block constraint alone, without the consecutive-pair exclusion
    /// (the alternative in-text definition).
    BlockRestrictedNoParity {
        /// Block size `N`.
        block_size: usize,
    },
}

impl PairingClass {
    /// Whether the pair `{a, b}` (any order) is admissible in this class.
    pub fn admits(&self, a: usize, b: usize) -> bool {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let consecutive = lo % 2 == 1 && hi == lo + 1;
        let same_block = |n: usize| (lo - 1) / n == (hi - 1) / n;
        match *self {
            PairingClass::All => true,
            PairingClass::NoConsecutivePairs => !consecutive,
            PairingClass::BlockRestricted { block_size } => {
                !same_block(block_size) && !consecutive
            }
            PairingClass::BlockRestrictedNoParity { block_size } => !same_block(block_size),
        }
    }
}

/// All pairings of `labels` admitted by `class`, in lexicographic order.
///
/// An odd-sized set has no pairings (empty list); the empty set has exactly
/// one, the empty pairing. Duplicate labels are rejected by debug assertion.
pub fn enumerate_pairings(labels: &[usize], class: PairingClass) -> Vec<Pairing> {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    debug_assert!(
        sorted.windows(2).all(|w| w[0] < w[1]),
        "labels must be distinct"
    );
    if sorted.len() % 2 != 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(sorted.len() / 2);
    let mut used = vec![false; sorted.len()];
    recurse(&sorted, &mut used, class, &mut current, &mut out);
    out
}

fn recurse(
    labels: &[usize],
    used: &mut [bool],
    class: PairingClass,
    current: &mut Vec<(usize, usize)>,
    out: &mut Vec<Pairing>,
) {
    let Some(first) = used.iter().position(|&u| !u) else {
        out.push(Pairing {
            pairs: current.clone(),
        });
        return;
    };
    used[first] = true;
    for j in first + 1..labels.len() {
        if used[j] || !class.admits(labels[first], labels[j]) {
            continue;
        }
        used[j] = true;
        current.push((labels[first], labels[j]));
        recurse(labels, used, class, current, out);
        current.pop();
        used[j] = false;
    }
    used[first] = false;
}

/// Number of pairings of `labels` admitted by `class` (no materialization).
pub fn count_pairings(labels: &[usize], class: PairingClass) -> u64 {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    if sorted.len() % 2 != 0 {
        return 0;
    }
    let mut used = vec![false; sorted.len()];
    count_recurse(&sorted, &mut used, class)
}

fn count_recurse(labels: &[usize], used: &mut [bool], class: PairingClass) -> u64 {
    let Some(first) = used.iter().position(|&u| !u) else {
        return 1;
    };
    used[first] = true;
    let mut total = 0;
    for j in first + 1..labels.len() {
        if used[j] || !class.admits(labels[first], labels[j]) {
            continue;
        }
        used[j] = true;
        total += count_recurse(labels, used, class);
        used[j] = false;
    }
    used[first] = false;
    total
}

/// Double factorial `n!! = n·(n−2)·(n−4)···`, with `0!! = (−1)!! = 1`
/// (pass `n = 0` for the latter via [`odd_double_factorial`]).
pub fn double_factorial(n: u64) -> u128 {
    let mut acc: u128 = 1;
    let mut k = n;
    while k > 1 {
        acc *= k as u128;
        k -= 2;
    }
    acc
}

/// `(2m−1)!!`, the number of pairings of a `2m`-element set.
pub fn odd_double_factorial(m: u64) -> u128 {
    if m == 0 {
        1
    } else {
        double_factorial(2 * m - 1)
    }
}

/// Pairing counts for the full label set `{1, …, block_size·num_blocks}`
/// under the two block-restricted definitions, with their difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassCountReport {
    /// Block size `N`.
    pub block_size: usize,
    /// Number of blocks `m`.
    pub num_blocks: usize,
    /// Count under the appendix-style definition (blocks + parity exclusion).
    pub with_parity_exclusion: u64,
    /// Count under the block-only definition.
    pub block_only: u64,
    /// `block_only − with_parity_exclusion` (the definitions coincide iff 0).
    pub difference: u64,
}

/// Compare the two block-restricted definitions on `{1, …, N·m}`.
///
/// For even `N` the parity exclusion is implied by the block constraint and
/// the difference is 0; for odd `N ≥ 3` straddling consecutive pairs such as
/// `{N, N+1}` are admitted by the block-only variant but not the other.
pub fn class_count_report(block_size: usize, num_blocks: usize) -> ClassCountReport {
    let labels: Vec<usize> = (1..=block_size * num_blocks).collect();
    let with_parity = count_pairings(&labels, PairingClass::BlockRestricted { block_size });
    let block_only = count_pairings(
        &labels,
        PairingClass::BlockRestrictedNoParity { block_size },
    );
    ClassCountReport {
        block_size,
        num_blocks,
        with_parity_exclusion: with_parity,
        block_only,
        difference: block_only - with_parity,
    }
}
