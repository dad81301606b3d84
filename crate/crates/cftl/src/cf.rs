//! The eight counterfactual conditionals over a finite evaluation context.
//!
//! The four base conditionals quantify over universe worlds ordered by the
//! similarity preorder.  Their minimal variants additionally require the
//! antecedent to carve out a ⊆-maximal world set; that condition is decided
//! two independent ways — a second-order enumeration over all ambient
//! subsets ([`minimal_so`]), and direct first-order formulas quantifying
//! only over worlds (`minimal_fo_*`).  Keeping both routes lets the test
//! suite confirm their equivalence instead of assuming it.
//!
//! Set-level evaluators (`*_sets`) work on extensions as bitsets and carry
//! the whole semantics; the formula-level wrappers compute extensions via
//! the context's satisfaction function and add witness names.

use crate::context::EvaluationContext;
use crate::error::{CftlError, Result};
use crate::formula::{CfFormula, CfOp, Formula};
use crate::order::Preorder;
use crate::worldset::WorldSet;

/// Verdict of a counterfactual evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfVerdict {
    pub value: bool,
    /// True when some world's satisfaction was decided at a quantifier bound.
    pub bounded: bool,
    /// Decisive worlds of the outermost quantifier (universe members):
    /// the witness on an existential success, the failing world on a
    /// universal failure.
    pub witnesses: Vec<String>,
}

/// Ambient-subset enumeration cap for [`minimal_so`].
pub const MINIMAL_SO_DEFAULT_CAP: usize = 14;

// ---------------------------------------------------------------------------
// Base conditionals on extensions
// ---------------------------------------------------------------------------

/// `φ would ψ`: either no universe world satisfies φ, or some φ-world W1 has
/// φ → ψ everywhere at least as close as W1.
pub fn would_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    let phi_u = phi.intersection(universe);
    if phi_u.is_empty() {
        return (true, None);
    }
    for w1 in phi_u.iter() {
        let bad = order
            .down_set(w1)
            .intersection(&phi_u)
            .difference(psi);
        if bad.is_empty() {
            return (true, Some(w1));
        }
    }
    (false, None)
}

/// `φ might ψ`: some universe world satisfies φ, and every φ-world has a
/// φ∧ψ-world at least as close.
pub fn might_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    let phi_u = phi.intersection(universe);
    if phi_u.is_empty() {
        return (false, None);
    }
    for w1 in phi_u.iter() {
        let wit = order.down_set(w1).intersection(&phi_u).intersection(psi);
        if wit.is_empty() {
            return (false, Some(w1));
        }
    }
    (true, None)
}

/// `φ uwould ψ`: either φ is unsatisfiable in the universe, or every φ-world
/// W1 has some φ-world W2 ≤ W1 below which φ → ψ holds throughout.
pub fn uwould_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    let phi_u = phi.intersection(universe);
    if phi_u.is_empty() {
        return (true, None);
    }
    for w1 in phi_u.iter() {
        let found = order.down_set(w1).intersection(&phi_u).iter().any(|w2| {
            order.down_set(w2).intersection(&phi_u).difference(psi).is_empty()
        });
        if !found {
            return (false, Some(w1));
        }
    }
    (true, None)
}

/// `φ emight ψ`: some φ-world W1 such that below every φ-world W2 ≤ W1
/// there is a φ∧ψ-world.
pub fn emight_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    let phi_u = phi.intersection(universe);
    for w1 in phi_u.iter() {
        let ok = order.down_set(w1).intersection(&phi_u).iter().all(|w2| {
            !order.down_set(w2).intersection(&phi_u).intersection(psi).is_empty()
        });
        if ok {
            return (true, Some(w1));
        }
    }
    (false, None)
}

/// Dispatches one of the four base conditionals on extensions.
pub fn base_op_sets(
    op: CfOp,
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    match op.base() {
        CfOp::Would => would_sets(order, universe, phi, psi),
        CfOp::Might => might_sets(order, universe, phi, psi),
        CfOp::UWould => uwould_sets(order, universe, phi, psi),
        CfOp::EMight => emight_sets(order, universe, phi, psi),
        _ => unreachable!("base() yields a base conditional"),
    }
}

// ---------------------------------------------------------------------------
// Minimality, second-order route
// ---------------------------------------------------------------------------

/// Minimal conditional by direct property enumeration: `op(φ, ψ)` holds and
/// no strict ambient superset φ′ ⊋ φ satisfies `op(φ′, ψ)`.  Candidate
/// properties are arbitrary ambient subsets, so ambient size is capped.
pub fn minimal_so_sets(
    op: CfOp,
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
    cap: usize,
) -> Result<(bool, Option<usize>)> {
    let n = order.len();
    if n > cap {
        return Err(CftlError::CapExceeded(format!(
            "second-order minimality enumerates 2^{n} ambient properties (cap {cap})"
        )));
    }
    let (value, witness) = base_op_sets(op, order, universe, phi, psi);
    if !value {
        return Ok((false, None));
    }
    let free: Vec<usize> = (0..n).filter(|&w| !phi.contains(w)).collect();
    for mask in 1u64..1 << free.len() {
        let mut candidate = phi.clone();
        for (bit, &w) in free.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                candidate.insert(w);
            }
        }
        if base_op_sets(op, order, universe, &candidate, psi).0 {
            return Ok((false, None));
        }
    }
    Ok((true, witness))
}

// ---------------------------------------------------------------------------
// Minimality, first-order route
// ---------------------------------------------------------------------------

// Shared first disjunct of the would/uwould minimal formulas: ψ is
// unsatisfiable in the universe, every world outside the universe satisfies
// φ, and no universe world does.
fn unsat_disjunct(universe: &WorldSet, phi: &WorldSet, psi: &WorldSet) -> bool {
    let complement = universe.complement();
    psi.intersection(universe).is_empty()
        && complement.is_subset(phi)
        && phi.intersection(universe).is_empty()
}

// Worlds outside the universe never affect the base conditionals, so any
// such world missing from φ could always be added: minimality requires the
// complement of the universe to be covered by φ.
fn uncovered_outside(universe: &WorldSet, phi: &WorldSet) -> Option<usize> {
    universe.complement().difference(phi).min()
}

/// First-order evaluation of the minimal `would` conditional.
///
/// Adding a ψ-world to the antecedent never disturbs an existing witness of
/// the base conditional, so every universe ψ-world must already be in φ.
/// Adding a ¬ψ-world w breaks a witness only when w sits below it; hence φ
/// is minimal exactly when some witness exists and every witness dominates
/// all universe worlds outside φ.
pub fn minimal_fo_would_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    if unsat_disjunct(universe, phi, psi) {
        return (true, None);
    }
    if let Some(w) = uncovered_outside(universe, phi) {
        return (false, Some(w));
    }
    let phi_u = phi.intersection(universe);
    if let Some(w) = psi.intersection(universe).difference(phi).min() {
        return (false, Some(w));
    }
    let missing = universe.difference(phi);
    let mut witness = None;
    for c in phi_u.iter() {
        if !order.down_set(c).intersection(&phi_u).difference(psi).is_empty() {
            continue;
        }
        if let Some(w) = missing.difference(order.down_set(c)).min() {
            return (false, Some(w));
        }
        witness.get_or_insert(c);
    }
    match witness {
        Some(c) => (true, Some(c)),
        None => (false, None),
    }
}

/// First-order evaluation of the minimal `might` conditional.
pub fn minimal_fo_might_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    let phi_u = phi.intersection(universe);
    if phi_u.is_empty() {
        return (false, None);
    }
    if let Some(w) = uncovered_outside(universe, phi) {
        return (false, Some(w));
    }
    // valid candidates W^c: everything not above W^c satisfies ¬φ → ¬ψ,
    // everything above it satisfies φ.
    let mut valid = WorldSet::empty(order.len());
    for c in phi_u.intersection(psi).iter() {
        let above = order.up_set(c).intersection(universe);
        let not_above = universe.difference(&above);
        if not_above.difference(phi).intersection(psi).is_empty() && above.is_subset(phi) {
            valid.insert(c);
        }
    }
    for w1 in phi_u.iter() {
        if order.down_set(w1).intersection(&valid).is_empty() {
            return (false, Some(w1));
        }
    }
    (true, None)
}

/// First-order evaluation of the minimal `uwould` conditional.
pub fn minimal_fo_uwould_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    if unsat_disjunct(universe, phi, psi) {
        return (true, None);
    }
    if let Some(w) = uncovered_outside(universe, phi) {
        return (false, Some(w));
    }
    let phi_u = phi.intersection(universe);
    if phi_u.is_empty() {
        return (false, None);
    }
    // Support worlds: φ-worlds of the universe whose φ-cone lies inside ψ.
    // The base conditional needs one below every φ-world.
    let mut support = WorldSet::empty(order.len());
    for c in phi_u.iter() {
        if order.down_set(c).intersection(&phi_u).difference(psi).is_empty() {
            support.insert(c);
        }
    }
    for w1 in phi_u.iter() {
        if order.down_set(w1).intersection(&support).is_empty() {
            return (false, Some(w1));
        }
    }
    // Minimality: every universe world outside φ, once added, must deprive
    // some φ-world (or itself) of all support.  An added ¬ψ-world destroys
    // exactly the support worlds above it; an added ψ-world destroys none
    // and supports itself iff its own φ-cone lies inside ψ.
    for w in universe.difference(phi).iter() {
        let self_support = psi.contains(w)
            && order.down_set(w).intersection(&phi_u).difference(psi).is_empty();
        let surviving = if psi.contains(w) {
            support.clone()
        } else {
            support.difference(order.up_set(w))
        };
        let grown_holds = phi_u.iter().chain(std::iter::once(w)).all(|w1| {
            (self_support && order.leq(w, w1))
                || !order.down_set(w1).intersection(&surviving).is_empty()
        });
        if grown_holds {
            return (false, Some(w));
        }
    }
    (true, None)
}

/// First-order evaluation of the minimal `emight` conditional.
///
/// A witness of the base conditional is a φ-world whose entire φ-cone sees a
/// φ∧ψ world at least as close.  Adding a ψ-world never interferes with any
/// witness, so every universe ψ-world must already be in φ; adding a
/// ¬ψ-world is harmless when a φ∧ψ world lies below it (the addition sees
/// its own anchor) or when some witness escapes its up-set.  Minimality
/// therefore requires each universe world outside φ to see no φ∧ψ world
/// below itself and to sit below every witness.
pub fn minimal_fo_emight_sets(
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    if let Some(w) = uncovered_outside(universe, phi) {
        return (false, Some(w));
    }
    let phi_u = phi.intersection(universe);
    let good = phi_u.intersection(psi);
    let mut anchored = WorldSet::empty(order.len());
    for w2 in phi_u.iter() {
        if !order.down_set(w2).intersection(&good).is_empty() {
            anchored.insert(w2);
        }
    }
    let mut first_witness = None;
    for w1 in phi_u.iter() {
        if order.down_set(w1).intersection(&phi_u).is_subset(&anchored) {
            first_witness = Some(w1);
            break;
        }
    }
    let Some(found) = first_witness else {
        return (false, None);
    };
    let missing = universe.difference(phi);
    if let Some(w) = missing.intersection(psi).min() {
        return (false, Some(w));
    }
    for w in missing.iter() {
        if !order.down_set(w).intersection(&good).is_empty() {
            return (false, Some(w));
        }
    }
    for w1 in phi_u.iter() {
        if order.down_set(w1).intersection(&phi_u).is_subset(&anchored) {
            if let Some(w) = missing.difference(order.down_set(w1)).min() {
                return (false, Some(w));
            }
        }
    }
    (true, Some(found))
}

/// Dispatches the first-order minimal evaluation for a minimal conditional.
pub fn minimal_fo_sets(
    op: CfOp,
    order: &Preorder,
    universe: &WorldSet,
    phi: &WorldSet,
    psi: &WorldSet,
) -> (bool, Option<usize>) {
    match op {
        CfOp::WouldMin => minimal_fo_would_sets(order, universe, phi, psi),
        CfOp::MightMin => minimal_fo_might_sets(order, universe, phi, psi),
        CfOp::UWouldMin => minimal_fo_uwould_sets(order, universe, phi, psi),
        CfOp::EMightMin => minimal_fo_emight_sets(order, universe, phi, psi),
        _ => unreachable!("minimal conditional expected"),
    }
}

// ---------------------------------------------------------------------------
// Formula-level wrappers
// ---------------------------------------------------------------------------

fn verdict(ctx: &EvaluationContext, raw: (bool, Option<usize>), bounded: bool) -> CfVerdict {
    CfVerdict {
        value: raw.0,
        bounded,
        witnesses: raw.1.map(|w| ctx.world(w).name.clone()).into_iter().collect(),
    }
}

fn extensions(
    ctx: &EvaluationContext,
    phi: &Formula,
    psi: &Formula,
) -> Result<(WorldSet, WorldSet, bool)> {
    let (p, b1) = ctx.ambient_extension(phi)?;
    let (q, b2) = ctx.ambient_extension(psi)?;
    Ok((p, q, b1 || b2))
}

pub fn would(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, would_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

pub fn might(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, might_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

pub fn uwould(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, uwould_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

pub fn emight(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, emight_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

/// Second-order minimal conditional (ambient-subset enumeration, default
/// cap).
pub fn minimal_so(
    ctx: &EvaluationContext,
    op: CfOp,
    phi: &Formula,
    psi: &Formula,
) -> Result<CfVerdict> {
    minimal_so_with_cap(ctx, op, phi, psi, MINIMAL_SO_DEFAULT_CAP)
}

pub fn minimal_so_with_cap(
    ctx: &EvaluationContext,
    op: CfOp,
    phi: &Formula,
    psi: &Formula,
    cap: usize,
) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    let raw = minimal_so_sets(op, ctx.order(), ctx.universe(), &p, &q, cap)?;
    Ok(verdict(ctx, raw, bounded))
}

pub fn minimal_fo_would(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, minimal_fo_would_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

pub fn minimal_fo_might(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, minimal_fo_might_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

pub fn minimal_fo_uwould(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, minimal_fo_uwould_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

pub fn minimal_fo_emight(ctx: &EvaluationContext, phi: &Formula, psi: &Formula) -> Result<CfVerdict> {
    let (p, q, bounded) = extensions(ctx, phi, psi)?;
    Ok(verdict(ctx, minimal_fo_emight_sets(ctx.order(), ctx.universe(), &p, &q), bounded))
}

/// Evaluates a top-level formula: plain parts at the reference world,
/// conditionals through their evaluators (minimal ones via the first-order
/// route), Boolean structure on the verdicts.
pub fn eval_top(ctx: &EvaluationContext, xi: &CfFormula, reference: &str) -> Result<CfVerdict> {
    let actual = &ctx.world(ctx.reference()).name;
    if actual != reference {
        return Err(CftlError::Input(format!(
            "reference '{reference}' does not match the context's reference world '{actual}'"
        )));
    }
    eval_cf(ctx, xi)
}

fn eval_cf(ctx: &EvaluationContext, xi: &CfFormula) -> Result<CfVerdict> {
    match xi {
        CfFormula::Plain(f) => {
            let out = ctx.satisfies(ctx.reference(), f)?;
            Ok(CfVerdict { value: out.value, bounded: out.bounded, witnesses: Vec::new() })
        }
        CfFormula::Cf(op, phi, psi) => {
            let (p, q, bounded) = extensions(ctx, phi, psi)?;
            let raw = if op.is_minimal() {
                minimal_fo_sets(*op, ctx.order(), ctx.universe(), &p, &q)
            } else {
                base_op_sets(*op, ctx.order(), ctx.universe(), &p, &q)
            };
            Ok(verdict(ctx, raw, bounded))
        }
        CfFormula::CfNot(x) => {
            let v = eval_cf(ctx, x)?;
            Ok(CfVerdict { value: !v.value, bounded: v.bounded, witnesses: Vec::new() })
        }
        CfFormula::CfAnd(l, r) => {
            let lv = eval_cf(ctx, l)?;
            if !lv.value && !lv.bounded {
                return Ok(CfVerdict { value: false, bounded: false, witnesses: lv.witnesses });
            }
            let rv = eval_cf(ctx, r)?;
            if !rv.value && !rv.bounded {
                return Ok(CfVerdict { value: false, bounded: false, witnesses: rv.witnesses });
            }
            Ok(CfVerdict {
                value: lv.value && rv.value,
                bounded: lv.bounded || rv.bounded,
                witnesses: lv.witnesses.into_iter().chain(rv.witnesses).collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::parse_cfu;
    use crate::formula::parse_formula;

    const CHAIN: &str = "\
worlds: r a b
universe: r a b
ref: r
prop A: a b
prop B: a
order: a<=b
";

    const FORK: &str = "\
worlds: r a b
universe: r a b
ref: r
prop A: a b
prop B: a
";

    fn chain() -> EvaluationContext {
        parse_cfu(CHAIN, None).unwrap()
    }

    fn fork() -> EvaluationContext {
        parse_cfu(FORK, None).unwrap()
    }

    fn set(ctx: &EvaluationContext, members: &[usize]) -> WorldSet {
        WorldSet::from_indices(ctx.len(), members.iter().copied())
    }

    // All 8×8 extension pairs of a 3-world context.
    fn all_pairs(ctx: &EvaluationContext) -> Vec<(WorldSet, WorldSet)> {
        let mut out = Vec::new();
        for pm in 0u64..8 {
            for qm in 0u64..8 {
                let p = WorldSet::from_indices(3, (0..3).filter(|i| pm >> i & 1 == 1));
                let q = WorldSet::from_indices(3, (0..3).filter(|i| qm >> i & 1 == 1));
                out.push((p, q));
            }
        }
        let _ = ctx;
        out
    }

    #[test]
    fn chain_and_fork_base_values() {
        let chain = chain();
        let (o, u) = (chain.order(), chain.universe());
        // φ = {a,b}, ψ = {a}: the weak reading succeeds, so does might.
        let phi = set(&chain, &[1, 2]);
        let psi = set(&chain, &[1]);
        assert!(would_sets(o, u, &phi, &psi).0);
        assert!(might_sets(o, u, &phi, &psi).0);

        let fork = fork();
        let (o, u) = (fork.order(), fork.universe());
        let phi = set(&fork, &[1, 2]);
        let psi = set(&fork, &[1]);
        // One branch satisfies ψ, the other cannot reach it: would is (too)
        // weak and holds, might is (too) strong and fails.
        assert!(would_sets(o, u, &phi, &psi).0);
        assert!(!might_sets(o, u, &phi, &psi).0);
        assert!(!uwould_sets(o, u, &phi, &psi).0);
        assert!(emight_sets(o, u, &phi, &psi).0);
    }

    #[test]
    fn vacuous_and_reflexive_cases() {
        for ctx in [chain(), fork()] {
            let (o, u) = (ctx.order(), ctx.universe());
            let empty = set(&ctx, &[]);
            let psi = set(&ctx, &[2]);
            assert!(would_sets(o, u, &empty, &psi).0);
            assert!(uwould_sets(o, u, &empty, &psi).0);
            assert!(!might_sets(o, u, &empty, &psi).0);
            assert!(!emight_sets(o, u, &empty, &psi).0);
            for (phi, _) in all_pairs(&ctx) {
                assert!(would_sets(o, u, &phi, &phi).0);
                assert!(uwould_sets(o, u, &phi, &phi).0);
            }
        }
    }

    #[test]
    fn dualities_on_the_fixtures() {
        for ctx in [chain(), fork()] {
            let (o, u) = (ctx.order(), ctx.universe());
            for (phi, psi) in all_pairs(&ctx) {
                let npsi = u.difference(&psi);
                assert_eq!(
                    would_sets(o, u, &phi, &psi).0,
                    !might_sets(o, u, &phi, &npsi).0,
                    "would/might duality"
                );
                assert_eq!(
                    uwould_sets(o, u, &phi, &psi).0,
                    !emight_sets(o, u, &phi, &npsi).0,
                    "uwould/emight duality"
                );
            }
        }
    }

    #[test]
    fn total_orders_collapse_the_pairs() {
        let chain = chain();
        let (o, u) = (chain.order(), chain.universe());
        for (phi, psi) in all_pairs(&chain) {
            assert_eq!(would_sets(o, u, &phi, &psi).0, uwould_sets(o, u, &phi, &psi).0);
            assert_eq!(might_sets(o, u, &phi, &psi).0, emight_sets(o, u, &phi, &psi).0);
        }
    }

    #[test]
    fn second_order_minimality_on_the_chain() {
        let chain = chain();
        let (o, u) = (chain.order(), chain.universe());
        // {a} alone is not minimal: the superset {a,b} also reaches ψ.
        let raw = minimal_so_sets(CfOp::Might, o, u, &set(&chain, &[1]), &set(&chain, &[1]), 14)
            .unwrap();
        assert!(!raw.0);
        // {a,b} is minimal: adding r fails because r itself misses ψ.
        let raw = minimal_so_sets(CfOp::Might, o, u, &set(&chain, &[1, 2]), &set(&chain, &[1]), 14)
            .unwrap();
        assert!(raw.0);
        // Unsatisfiable antecedent: the leading conjunct already fails.
        let raw = minimal_so_sets(CfOp::Might, o, u, &set(&chain, &[]), &set(&chain, &[1]), 14)
            .unwrap();
        assert!(!raw.0);
        assert!(matches!(
            minimal_so_sets(CfOp::Might, o, u, &set(&chain, &[1]), &set(&chain, &[1]), 2),
            Err(CftlError::CapExceeded(_))
        ));
    }

    #[test]
    fn first_order_matches_second_order_on_the_fixtures() {
        for ctx in [chain(), fork()] {
            let (o, u) = (ctx.order(), ctx.universe());
            for (phi, psi) in all_pairs(&ctx) {
                for op in [CfOp::WouldMin, CfOp::MightMin, CfOp::UWouldMin, CfOp::EMightMin] {
                    let so = minimal_so_sets(op, o, u, &phi, &psi, 14).unwrap().0;
                    let fo = minimal_fo_sets(op, o, u, &phi, &psi).0;
                    assert_eq!(
                        so, fo,
                        "{:?} disagreement at φ={:?} ψ={:?}",
                        op, phi, psi
                    );
                }
            }
        }
    }

    #[test]
    fn unsat_consequent_disjunct() {
        // Ambient {r,a,b,x} with universe {r,a,b}: with ψ unsatisfiable the
        // minimal would/uwould hold exactly when φ covers the outside world
        // and nothing inside.
        let text = "\
worlds: r a b x
universe: r a b
ref: r
prop P: x
prop Q: a x
";
        let ctx = parse_cfu(text, None).unwrap();
        let (o, u) = (ctx.order(), ctx.universe());
        let empty = WorldSet::empty(4);
        let outside = WorldSet::from_indices(4, [3]);
        let mixed = WorldSet::from_indices(4, [1, 3]);
        assert!(minimal_fo_would_sets(o, u, &outside, &empty).0);
        assert!(minimal_fo_uwould_sets(o, u, &outside, &empty).0);
        assert!(!minimal_fo_would_sets(o, u, &empty, &empty).0);
        assert!(!minimal_fo_would_sets(o, u, &mixed, &empty).0);
        // And the second-order route agrees on this slice.
        for phi in [&outside, &empty, &mixed] {
            assert_eq!(
                minimal_so_sets(CfOp::WouldMin, o, u, phi, &empty, 14).unwrap().0,
                minimal_fo_would_sets(o, u, phi, &empty).0
            );
            assert_eq!(
                minimal_so_sets(CfOp::UWouldMin, o, u, phi, &empty, 14).unwrap().0,
                minimal_fo_uwould_sets(o, u, phi, &empty).0
            );
        }
    }

    #[test]
    fn top_level_evaluation() {
        let ctx = chain();
        let v = eval_top(&ctx, &parse_formula("A would A").unwrap(), "r").unwrap();
        assert!(v.value && !v.bounded);
        let v = eval_top(&ctx, &parse_formula("true").unwrap(), "r").unwrap();
        assert!(v.value);
        let v = eval_top(&ctx, &parse_formula("!false").unwrap(), "r").unwrap();
        assert!(v.value);
        let v = eval_top(&ctx, &parse_formula("(A would B) & !B").unwrap(), "r").unwrap();
        assert!(v.value, "conditional holds and reference lacks B");
        assert!(matches!(
            eval_top(&ctx, &parse_formula("true").unwrap(), "a"),
            Err(CftlError::Input(_))
        ));
    }

    #[test]
    fn witnesses_are_reported_by_lowest_id() {
        let ctx = chain();
        let phi = crate::formula::parse_plain("A").unwrap();
        let psi = crate::formula::parse_plain("B").unwrap();
        let v = would(&ctx, &phi, &psi).unwrap();
        assert!(v.value);
        assert_eq!(v.witnesses, vec!["a".to_string()]);
    }
}
