//! Compact sets of world indices.
//!
//! Evaluation contexts index their ambient worlds `0..n`; the counterfactual
//! evaluators manipulate subsets of that range heavily (extensions of
//! formulas, down-sets of the preorder, candidate antecedents).  `WorldSet` is
//! a fixed-width bitset so these operations stay cheap even when the
//! second-order minimality check enumerates thousands of candidate sets.

use smallvec::{smallvec, SmallVec};

/// A subset of the world indices `0..n` of one evaluation context.
///
/// All sets participating in an operation must come from the same context
/// (same `n`); mixing widths is a logic error and panics in debug builds.
/// Storage stays inline for up to 128 worlds, so the hot set algebra in the
/// evaluators does not allocate.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct WorldSet {
    n: usize,
    words: SmallVec<[u64; 2]>,
}

impl WorldSet {
    /// The empty subset of `0..n`.
    pub fn empty(n: usize) -> Self {
        WorldSet {
            n,
            words: smallvec![0; n.div_ceil(64)],
        }
    }

    /// The full set `0..n`.
    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    /// Builds a set from listed indices.
    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for i in indices {
            s.insert(i);
        }
        s
    }

    /// Size of the underlying index range (not the cardinality).
    pub fn domain_size(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        debug_assert!(i < self.n);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.n);
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `self ⊆ other`.
    pub fn is_subset(&self, other: &WorldSet) -> bool {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// `self ⊊ other`.
    pub fn is_strict_subset(&self, other: &WorldSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn intersection(&self, other: &WorldSet) -> WorldSet {
        debug_assert_eq!(self.n, other.n);
        WorldSet {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn union(&self, other: &WorldSet) -> WorldSet {
        debug_assert_eq!(self.n, other.n);
        WorldSet {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    /// `self ∖ other`.
    pub fn difference(&self, other: &WorldSet) -> WorldSet {
        debug_assert_eq!(self.n, other.n);
        WorldSet {
            n: self.n,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & !b)
                .collect(),
        }
    }

    /// Complement within `0..n`.
    pub fn complement(&self) -> WorldSet {
        self.difference(self).union_complement_of(self)
    }

    fn union_complement_of(&self, other: &WorldSet) -> WorldSet {
        let mut words: SmallVec<[u64; 2]> = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a | !b)
            .collect();
        // Mask off bits beyond n in the last word.
        if self.n % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (self.n % 64)) - 1;
            }
        }
        WorldSet { n: self.n, words }
    }

    pub fn intersects(&self, other: &WorldSet) -> bool {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(&other.words)
            .any(|(a, b)| a & b != 0)
    }

    /// Iterates the member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.contains(i))
    }

    /// Lowest member index, if any.
    pub fn min(&self) -> Option<usize> {
        self.iter().next()
    }
}

impl std::fmt::Debug for WorldSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
