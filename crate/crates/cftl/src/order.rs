//! Similarity preorders over a finite set of worlds.
//!
//! A [`Preorder`] stores, for every world, the bitset of worlds below and
//! above it, with one distinguished reference world that must be the unique
//! minimum — the reference is at least as close to itself as anything else,
//! and nothing else is that close.  Incomparability is simply `leq` false in
//! both directions.

use crate::error::{CftlError, Result};
use crate::worldset::WorldSet;

/// Reflexive-transitive relation `w1 ≤ w2` ("w1 is at least as close to the
/// reference as w2") with the reference as unique minimum.
#[derive(Debug, Clone)]
pub struct Preorder {
    reference: usize,
    /// `down[w]` = all `v` with `v ≤ w`.
    down: Vec<WorldSet>,
    /// `up[w]` = all `v` with `w ≤ v`.
    up: Vec<WorldSet>,
}

impl Preorder {
    /// Number of worlds.
    pub fn len(&self) -> usize {
        self.down.len()
    }

    pub fn is_empty(&self) -> bool {
        self.down.is_empty()
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// `w1 ≤ w2`.
    pub fn leq(&self, w1: usize, w2: usize) -> bool {
        self.down[w2].contains(w1)
    }

    /// All worlds `≤ w` (including `w`).
    pub fn down_set(&self, w: usize) -> &WorldSet {
        &self.down[w]
    }

    /// All worlds `≥ w` (including `w`).
    pub fn up_set(&self, w: usize) -> &WorldSet {
        &self.up[w]
    }

    /// True if every pair of worlds is comparable.
    pub fn is_total(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..n).all(|j| self.leq(i, j) || self.leq(j, i)))
    }

    fn from_up_sets(up: Vec<WorldSet>, reference: usize) -> Result<Preorder> {
        let n = up.len();
        let mut down = vec![WorldSet::empty(n); n];
        for w in 0..n {
            for v in up[w].iter() {
                down[v].insert(w);
            }
        }
        // Unique-minimum invariant: reference below everything, nothing else
        // below the reference.
        for w in 0..n {
            if !down[w].contains(reference) {
                return Err(CftlError::MinimumViolated(format!(
                    "reference world is not below world {w}"
                )));
            }
        }
        for w in down[reference].iter() {
            if w != reference {
                return Err(CftlError::MinimumViolated(format!(
                    "world {w} is as close as the reference itself"
                )));
            }
        }
        Ok(Preorder { reference, down, up })
    }

    /// Builds the preorder in which `w1 ≤ w2` iff `masks[w1] ⊆ masks[w2]`,
    /// as used for change-subset similarity (mask = set of flipped
    /// position/proposition pairs vs. the reference).  The reference must
    /// have an empty mask and must be the only world with one.
    pub fn from_difference_masks(masks: &[WorldSet], reference: usize) -> Result<Preorder> {
        let up = Preorder::mask_up_sets(masks, reference)?;
        Preorder::from_up_sets(up, reference)
    }

    /// Like [`Preorder::from_difference_masks`], but tolerates worlds whose
    /// mask equals the reference's empty mask.  Intervention universes need
    /// this: worlds differing from the reference only in propositions the
    /// similarity does not track (contingency flags) are exactly as close as
    /// the reference itself and form its equivalence class.
    pub fn from_difference_masks_with_ties(
        masks: &[WorldSet],
        reference: usize,
    ) -> Result<Preorder> {
        let up = Preorder::mask_up_sets(masks, reference)?;
        let n = up.len();
        let mut down = vec![WorldSet::empty(n); n];
        for w in 0..n {
            for v in up[w].iter() {
                down[v].insert(w);
            }
        }
        for w in 0..n {
            if !down[w].contains(reference) {
                return Err(CftlError::MinimumViolated(format!(
                    "reference world is not below world {w}"
                )));
            }
        }
        Ok(Preorder { reference, down, up })
    }

    fn mask_up_sets(masks: &[WorldSet], reference: usize) -> Result<Vec<WorldSet>> {
        let n = masks.len();
        if reference >= n {
            return Err(CftlError::UnknownWorld(format!("reference index {reference}")));
        }
        let mut up = vec![WorldSet::empty(n); n];
        for w1 in 0..n {
            for w2 in 0..n {
                if masks[w1].is_subset(&masks[w2]) {
                    up[w1].insert(w2);
                }
            }
        }
        Ok(up)
    }
}

/// Builds the least preorder containing the generator pairs, reflexivity,
/// and `reference ≤ w` for every world; fails if any other world ends up
/// below the reference.
pub fn closure_preorder(
    generators: &[(usize, usize)],
    n: usize,
    reference: usize,
) -> Result<Preorder> {
    if reference >= n {
        return Err(CftlError::UnknownWorld(format!("reference index {reference}")));
    }
    let mut up = vec![WorldSet::empty(n); n];
    for w in 0..n {
        up[w].insert(w);
        up[reference].insert(w);
    }
    for &(w1, w2) in generators {
        if w1 >= n || w2 >= n {
            return Err(CftlError::UnknownWorld(format!("generator pair ({w1}, {w2})")));
        }
        up[w1].insert(w2);
    }
    // Transitive closure on bitset rows.
    for k in 0..n {
        for w in 0..n {
            if up[w].contains(k) {
                let reach = up[k].clone();
                up[w] = up[w].union(&reach);
            }
        }
    }
    Preorder::from_up_sets(up, reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_closure() {
        // r ≤ a ≤ b closes to a total chain.
        let p = closure_preorder(&[(1, 2)], 3, 0).unwrap();
        assert!(p.leq(0, 1) && p.leq(1, 2) && p.leq(0, 2));
        assert!(!p.leq(2, 1) && !p.leq(1, 0));
        assert!(p.leq(1, 1));
        assert!(p.is_total());
        assert_eq!(p.down_set(2).iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(p.up_set(1).iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn empty_generators_leave_branches_incomparable() {
        let p = closure_preorder(&[], 3, 0).unwrap();
        assert!(p.leq(0, 1) && p.leq(0, 2));
        assert!(!p.leq(1, 2) && !p.leq(2, 1));
        assert!(!p.is_total());
    }

    #[test]
    fn minimum_violations_are_rejected() {
        let e = closure_preorder(&[(1, 0)], 3, 0).unwrap_err();
        assert!(matches!(e, CftlError::MinimumViolated(_)), "{e}");
        // A cycle through the reference violates uniqueness too.
        let e = closure_preorder(&[(1, 2), (2, 0)], 3, 0).unwrap_err();
        assert!(matches!(e, CftlError::MinimumViolated(_)), "{e}");
        assert!(matches!(
            closure_preorder(&[(0, 9)], 3, 0),
            Err(CftlError::UnknownWorld(_))
        ));
    }

    #[test]
    fn difference_masks_order_by_containment() {
        // Masks over 4 flip-slots: ref {}, a {0}, b {0,1}, c {2}.
        let masks = vec![
            WorldSet::empty(4),
            WorldSet::from_indices(4, [0]),
            WorldSet::from_indices(4, [0, 1]),
            WorldSet::from_indices(4, [2]),
        ];
        let p = Preorder::from_difference_masks(&masks, 0).unwrap();
        assert!(p.leq(1, 2));
        assert!(!p.leq(2, 1));
        assert!(!p.leq(1, 3) && !p.leq(3, 1));
        assert!(p.leq(0, 3));
        // Duplicate empty mask collides with the reference.
        let masks = vec![WorldSet::empty(2), WorldSet::empty(2)];
        assert!(matches!(
            Preorder::from_difference_masks(&masks, 0),
            Err(CftlError::MinimumViolated(_))
        ));
    }
}
