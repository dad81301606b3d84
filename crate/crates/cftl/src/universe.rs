//! Bounded lasso universes.
//!
//! The closest-world orders compare traces by where they differ from a
//! reference on a set of mutable propositions.  This module realizes that
//! idea at desk scale: starting from a reference lasso and a universe
//! formula, it enumerates every lasso in a bounded shape family whose
//! mutable propositions differ from the reference only inside an edit
//! window, completes the remaining propositions by backtracking search
//! under the universe formula, and assembles the survivors into a finite
//! [`EvaluationContext`] ordered by difference-set inclusion.

use std::collections::BTreeSet;

use crate::context::{ContextWorld, EvaluationContext};
use crate::error::{CftlError, Result};
use crate::formula::Formula;
use crate::ltl::eval_ltl_at;
use crate::order::Preorder;
use crate::trace::{align_lassos, lcm, LassoTrace, Letter};
use crate::worldset::WorldSet;

/// Hard cap on the number of enumerated edit candidates.
pub const CANDIDATE_CAP: u64 = 1 << 22;
/// Hard cap on backtracking nodes spent completing one candidate.
pub const COMPLETION_NODE_CAP: u64 = 1_000_000;

/// Everything needed to build a bounded universe: the universe formula, the
/// reference lasso, the mutable propositions the similarity order tracks,
/// the edit window (positions `0..window` may differ from the reference),
/// and the lasso shape bounds.
#[derive(Debug, Clone)]
pub struct UniverseSpec {
    universe_formula: Formula,
    reference: LassoTrace,
    mutable: Vec<String>,
    window: usize,
    max_prefix: usize,
    loops: Vec<usize>,
    alphabet: BTreeSet<String>,
}

impl UniverseSpec {
    pub fn new(
        universe_formula: Formula,
        reference: LassoTrace,
        mutable: BTreeSet<String>,
        window: usize,
        max_prefix: usize,
        loops: impl IntoIterator<Item = usize>,
    ) -> Result<UniverseSpec> {
        if mutable.is_empty() {
            return Err(CftlError::Input("the mutable proposition set is empty".into()));
        }
        if window == 0 {
            return Err(CftlError::Input("the edit window must cover at least position 0".into()));
        }
        if !universe_formula.is_quantifier_free() {
            return Err(CftlError::Quantifier(
                "the universe formula must be quantifier-free".into(),
            ));
        }
        let loops: BTreeSet<usize> = loops.into_iter().collect();
        if loops.is_empty() || loops.contains(&0) {
            return Err(CftlError::Input("loop lengths must be a nonempty set of positive sizes".into()));
        }
        let mut alphabet = reference.alphabet().clone();
        alphabet.extend(universe_formula.free_atoms());
        alphabet.extend(mutable.iter().cloned());
        let reference = reference.extend_alphabet(&alphabet)?;
        if !eval_ltl_at(&reference, &universe_formula, 0)? {
            return Err(CftlError::Model(
                "the reference trace does not satisfy the universe formula".into(),
            ));
        }
        Ok(UniverseSpec {
            universe_formula,
            reference,
            mutable: mutable.into_iter().collect(),
            window,
            max_prefix,
            loops: loops.into_iter().collect(),
            alphabet,
        })
    }

    pub fn universe_formula(&self) -> &Formula {
        &self.universe_formula
    }

    pub fn reference(&self) -> &LassoTrace {
        &self.reference
    }

    pub fn mutable(&self) -> &[String] {
        &self.mutable
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }
}

/// A lasso shape whose mutable propositions are fixed at every position and
/// whose remaining propositions are still undetermined.
#[derive(Debug, Clone)]
pub struct PartialLasso {
    pub prefix: Vec<Letter>,
    pub loop_: Vec<Letter>,
}

fn restrict(letter: &Letter, props: &[String]) -> Letter {
    props.iter().filter(|p| letter.contains(*p)).cloned().collect()
}

/// Enumerates every lasso shape within the spec's shape bounds, assigning
/// the mutable propositions: positions inside the edit window range over all
/// assignments, while positions outside it (including every loop slot, whose
/// letters recur arbitrarily late) are pinned to the aligned reference.
/// Shapes whose loop slots would need two different pinned values yield
/// nothing.  Non-mutable propositions are left undetermined.
pub fn enumerate_edits(spec: &UniverseSpec) -> Result<Vec<PartialLasso>> {
    let (ref_p, ref_l) = spec.reference.shape();
    let x = &spec.mutable;
    let mut out = Vec::new();
    let mut total: u64 = 0;
    for p in 0..=spec.max_prefix {
        'shapes: for &l in &spec.loops {
            // Pin each loop slot from every out-of-window position it occupies.
            let start = p.max(spec.window);
            let end = start.max(ref_p) + lcm(l, ref_l);
            let mut slots: Vec<Option<Letter>> = vec![None; l];
            for i in start..end {
                let slot = (i - p) % l;
                let pinned = restrict(spec.reference.letter_at(i), x);
                match &slots[slot] {
                    None => slots[slot] = Some(pinned),
                    Some(v) if *v == pinned => {}
                    Some(_) => continue 'shapes,
                }
            }
            let slots: Vec<Letter> = slots.into_iter().map(|s| s.expect("every slot recurs")).collect();
            let free = p.min(spec.window);
            let bits = x.len() * free;
            if bits >= CANDIDATE_CAP.trailing_zeros() as usize {
                return Err(CftlError::CapExceeded(format!(
                    "edit enumeration needs 2^{bits} candidates for one shape (cap {CANDIDATE_CAP})"
                )));
            }
            let combos: u64 = 1 << bits;
            total += combos;
            if total > CANDIDATE_CAP {
                return Err(CftlError::CapExceeded(format!(
                    "edit enumeration exceeds {CANDIDATE_CAP} candidates"
                )));
            }
            for assignment in 0..combos {
                let mut prefix = Vec::with_capacity(p);
                for j in 0..p {
                    if j < free {
                        let letter: Letter = x
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| assignment >> (j * x.len() + k) & 1 == 1)
                            .map(|(_, prop)| prop.clone())
                            .collect();
                        prefix.push(letter);
                    } else {
                        prefix.push(restrict(spec.reference.letter_at(j), x));
                    }
                }
                out.push(PartialLasso { prefix, loop_: slots.clone() });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Completion search
// ---------------------------------------------------------------------------

// Conjunct of the universe formula usable for pruning during completion.
// `from` is the first position the clause constrains; clauses recurring in
// the loop constrain every loop position regardless of `from`.
struct PruningPlan {
    state: Vec<(usize, Formula)>,
    transition: Vec<(usize, Formula)>,
    pointwise: Vec<Formula>,
}

fn flatten_and(f: &Formula, out: &mut Vec<Formula>) {
    if let Formula::And(a, b) = f {
        flatten_and(a, out);
        flatten_and(b, out);
    } else {
        out.push(f.clone());
    }
}

// Greatest depth of next-operators over any atom, when the formula uses
// only propositional connectives and X; `None` otherwise.
fn pointwise_depth(f: &Formula) -> Option<usize> {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => Some(0),
        Formula::Not(a) => pointwise_depth(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            Some(pointwise_depth(a)?.max(pointwise_depth(b)?))
        }
        Formula::Next(a) => Some(pointwise_depth(a)? + 1),
        _ => None,
    }
}

impl PruningPlan {
    fn analyze(universe_formula: &Formula) -> PruningPlan {
        let mut plan =
            PruningPlan { state: Vec::new(), transition: Vec::new(), pointwise: Vec::new() };
        let mut conjuncts = Vec::new();
        flatten_and(universe_formula, &mut conjuncts);
        for conjunct in conjuncts {
            let mut depth = 0;
            let mut inner = &conjunct;
            while let Formula::Next(a) = inner {
                depth += 1;
                inner = a;
            }
            if let Formula::Globally(body) = inner {
                let mut clauses = Vec::new();
                flatten_and(body, &mut clauses);
                for clause in clauses {
                    match pointwise_depth(&clause) {
                        Some(0) => plan.state.push((depth, clause)),
                        Some(1) => plan.transition.push((depth, clause)),
                        _ => {}
                    }
                }
            } else if pointwise_depth(&conjunct).is_some() {
                plan.pointwise.push(conjunct);
            }
        }
        plan
    }
}

// Evaluates a propositional-with-X clause on consecutive letters:
// an atom under d next-operators reads `letters[d]`.
fn eval_clause(f: &Formula, letters: &[&Letter]) -> bool {
    fn go(f: &Formula, letters: &[&Letter], depth: usize) -> bool {
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(p) => letters[depth].contains(p),
            Formula::Not(a) => !go(a, letters, depth),
            Formula::And(a, b) => go(a, letters, depth) && go(b, letters, depth),
            Formula::Or(a, b) => go(a, letters, depth) || go(b, letters, depth),
            Formula::Implies(a, b) => !go(a, letters, depth) || go(b, letters, depth),
            Formula::Iff(a, b) => go(a, letters, depth) == go(b, letters, depth),
            Formula::Next(a) => go(a, letters, depth + 1),
            _ => unreachable!("clause classified as pointwise"),
        }
    }
    go(f, letters, 0)
}

struct Completer<'a> {
    spec: &'a UniverseSpec,
    plan: PruningPlan,
    other_subsets: Vec<Letter>,
    nodes: u64,
}

impl<'a> Completer<'a> {
    fn new(spec: &'a UniverseSpec) -> Completer<'a> {
        let others: Vec<String> =
            spec.alphabet.iter().filter(|p| !spec.mutable.contains(*p)).cloned().collect();
        let other_subsets = (0u64..1 << others.len())
            .map(|mask| {
                others
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, p)| p.clone())
                    .collect()
            })
            .collect();
        Completer { spec, plan: PruningPlan::analyze(&spec.universe_formula), other_subsets, nodes: 0 }
    }

    // Letter index of absolute position `i` in a (p, l)-shaped lasso.
    fn index(p: usize, l: usize, i: usize) -> usize {
        if i < p {
            i
        } else {
            p + (i - p) % l
        }
    }

    fn prune_ok(&self, letters: &[Letter], i: usize, p: usize, l: usize) -> bool {
        let len = p + l;
        let in_loop = i >= p;
        for (from, clause) in &self.plan.state {
            if (in_loop || i >= *from) && !eval_clause(clause, &[&letters[i]]) {
                return false;
            }
        }
        if i > 0 {
            let pair_in_loop = i - 1 >= p;
            for (from, clause) in &self.plan.transition {
                if (pair_in_loop || i - 1 >= *from)
                    && !eval_clause(clause, &[&letters[i - 1], &letters[i]])
                {
                    return false;
                }
            }
        }
        if i == len - 1 {
            // The wrap pair recurs at every loop traversal, so every
            // transition clause applies to it.
            let back = &letters[p];
            for (_, clause) in &self.plan.transition {
                if !eval_clause(clause, &[&letters[len - 1], back]) {
                    return false;
                }
            }
            for clause in &self.plan.pointwise {
                let depth = pointwise_depth(clause).expect("classified as pointwise");
                let view: Vec<&Letter> =
                    (0..=depth).map(|d| &letters[Self::index(p, l, d)]).collect();
                if !eval_clause(clause, &view) {
                    return false;
                }
            }
        }
        true
    }

    fn complete(&mut self, partial: &PartialLasso, out: &mut Vec<LassoTrace>) -> Result<()> {
        let (p, l) = (partial.prefix.len(), partial.loop_.len());
        let len = p + l;
        let mut letters: Vec<Letter> = Vec::with_capacity(len);
        self.nodes = 0;
        self.search(partial, &mut letters, p, l, len, out)
    }

    fn search(
        &mut self,
        partial: &PartialLasso,
        letters: &mut Vec<Letter>,
        p: usize,
        l: usize,
        len: usize,
        out: &mut Vec<LassoTrace>,
    ) -> Result<()> {
        let i = letters.len();
        if i == len {
            let trace = LassoTrace::new(
                letters[..p].to_vec(),
                letters[p..].to_vec(),
                self.spec.alphabet.clone(),
            )?;
            if eval_ltl_at(&trace, &self.spec.universe_formula, 0)? {
                out.push(trace);
            }
            return Ok(());
        }
        let base = if i < p { &partial.prefix[i] } else { &partial.loop_[i - p] };
        for s in 0..self.other_subsets.len() {
            self.nodes += 1;
            if self.nodes > COMPLETION_NODE_CAP {
                return Err(CftlError::CapExceeded(format!(
                    "completion search exceeds {COMPLETION_NODE_CAP} nodes for one candidate"
                )));
            }
            let mut letter = base.clone();
            letter.extend(self.other_subsets[s].iter().cloned());
            letters.push(letter);
            if self.prune_ok(letters, i, p, l) {
                self.search(partial, letters, p, l, len, out)?;
            }
            letters.pop();
        }
        Ok(())
    }
}

/// Completes the non-mutable propositions of each partial lasso by
/// backtracking search; a completion is kept exactly when it satisfies the
/// universe formula at position 0.  Conjuncts of the universe formula that
/// fit a per-position or per-transition shape prune the search; everything
/// else is settled by the final check.
pub fn complete_candidates(
    spec: &UniverseSpec,
    partials: &[PartialLasso],
) -> Result<Vec<LassoTrace>> {
    let mut completer = Completer::new(spec);
    let mut out = Vec::new();
    for partial in partials {
        completer.complete(partial, &mut out)?;
    }
    Ok(out)
}

/// Builds the bounded universe context: all deduplicated completions plus
/// the reference, ordered by inclusion of their mutable-proposition
/// difference sets against the reference.
pub fn build_context(spec: &UniverseSpec) -> Result<EvaluationContext> {
    let partials = enumerate_edits(spec)?;
    let completions = complete_candidates(spec, &partials)?;
    let mut worlds: BTreeSet<LassoTrace> = completions.into_iter().collect();
    worlds.insert(spec.reference.clone());
    let worlds: Vec<LassoTrace> = worlds.into_iter().collect();
    let reference_index = worlds
        .iter()
        .position(|t| *t == spec.reference)
        .expect("the reference was inserted");
    let views: Vec<&LassoTrace> = worlds.iter().collect();
    let (p, l, rows) = align_lassos(&views)?;
    let span = p + l;
    let x = &spec.mutable;
    let masks: Vec<WorldSet> = rows
        .iter()
        .map(|row| {
            WorldSet::from_indices(
                span * x.len(),
                (0..span).flat_map(|j| {
                    let here = &row[j];
                    let there = &rows[reference_index][j];
                    x.iter().enumerate().filter_map(move |(k, prop)| {
                        (here.contains(prop) != there.contains(prop)).then_some(j * x.len() + k)
                    })
                }),
            )
        })
        .collect();
    let order = Preorder::from_difference_masks(&masks, reference_index).map_err(|e| {
        CftlError::Model(format!(
            "universe similarity has no unique closest world: {e}"
        ))
    })?;
    let context_worlds: Vec<ContextWorld> = worlds
        .into_iter()
        .map(|trace| ContextWorld { name: trace.to_string(), trace })
        .collect();
    let n = context_worlds.len();
    EvaluationContext::new(context_worlds, WorldSet::full(n), order)
}
