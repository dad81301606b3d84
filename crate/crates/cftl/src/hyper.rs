//! Emission of the counterfactual semantics as prenex HyperQPTL text.
//!
//! The counterfactual operators quantify over worlds of a similarity order.
//! Read over the set of *all* traces, that quantification becomes trace
//! quantification, and each conditional turns into a block of trace
//! quantifiers around a quantifier-free matrix: the world `W ⊨ φ` tests
//! become `φ` subscripted with a trace variable, universe membership becomes
//! a `φ^U` guard (positively under `exists`, as an implication premise under
//! `forall`, and with a negated guard for the clauses that range over the
//! complement of the universe), and `≤` becomes an instance of the
//! three-trace similarity formula.
//!
//! The output convention is plain ASCII: `exists p1. forall p2. <matrix>`,
//! with atom `a` on trace `p1` written `a_p1`.  Trace quantifiers come
//! first; quantified propositions (hoisted from plain QPTL parts and from
//! the loop anchor of a pinned lasso) trail them, which is sound here
//! because every hoisted proposition is confined to one conjunct that
//! mentions no other quantified trace.  The `might`-minimal conditional is
//! emitted in its anchored four-variable form `exists p1. forall p2. exists
//! p3. forall p4.`; the other seven operators follow the same transcription
//! scheme but their exact prenex shapes are this module's own derivation,
//! and their emissions say so in a header comment.  The `uwould`-minimal
//! transcription additionally needs to speak about *adding* the tested world
//! to the antecedent, which is encoded by trace equality over all mentioned
//! propositions (formulas cannot distinguish traces that agree on every
//! proposition they read).
//!
//! Printing goes through the [`HyperPrinter`] trait so that adapters for
//! specific external checkers can be plugged in; [`AsciiPrinter`] is the
//! default and renders header comments as `#` lines.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{CftlError, Result};
use crate::formula::{CfFormula, CfOp, Formula};
use crate::trace::LassoTrace;

// ---------------------------------------------------------------------------
// Prenex shape
// ---------------------------------------------------------------------------

/// Quantifier kind of a prefix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quant {
    Exists,
    Forall,
}

impl Quant {
    pub fn flip(self) -> Quant {
        match self {
            Quant::Exists => Quant::Forall,
            Quant::Forall => Quant::Exists,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Quant::Exists => "exists",
            Quant::Forall => "forall",
        }
    }
}

/// One entry of the quantifier prefix: a trace variable or a quantified
/// proposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrefixItem {
    Trace(Quant, String),
    Prop(Quant, String),
}

impl PrefixItem {
    pub fn quant(&self) -> Quant {
        match self {
            PrefixItem::Trace(q, _) | PrefixItem::Prop(q, _) => *q,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            PrefixItem::Trace(_, n) | PrefixItem::Prop(_, n) => n,
        }
    }
}

/// A prenex trace-quantified formula: header comments, a quantifier prefix
/// (trace variables first, quantified propositions after), and a
/// quantifier-free matrix over trace-indexed atoms `a_p1` plus the
/// quantified proposition names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperFormula {
    /// Human-readable header lines, rendered as `#` comments.
    pub comments: Vec<String>,
    pub prefix: Vec<PrefixItem>,
    pub matrix: Formula,
}

impl HyperFormula {
    /// Names of the trace variables bound in the prefix, in order.
    pub fn trace_vars(&self) -> Vec<&str> {
        self.prefix
            .iter()
            .filter_map(|i| match i {
                PrefixItem::Trace(_, n) => Some(n.as_str()),
                PrefixItem::Prop(..) => None,
            })
            .collect()
    }

    /// Names of the quantified propositions in the prefix, in order.
    pub fn prop_vars(&self) -> Vec<&str> {
        self.prefix
            .iter()
            .filter_map(|i| match i {
                PrefixItem::Prop(_, n) => Some(n.as_str()),
                PrefixItem::Trace(..) => None,
            })
            .collect()
    }

    /// Checks the prenex invariants: trace quantifiers precede proposition
    /// quantifiers, every name is bound once (and does not shadow a free
    /// trace variable), the matrix is quantifier-free, and every matrix atom
    /// is either indexed by a bound or free trace variable or is a
    /// quantified proposition.
    pub fn validate(&self, free_traces: &[&str]) -> Result<()> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for v in free_traces {
            if !seen.insert(v) {
                return Err(CftlError::Quantifier(format!(
                    "free trace variable '{v}' listed twice"
                )));
            }
        }
        let mut props_started = false;
        for item in &self.prefix {
            if matches!(item, PrefixItem::Prop(..)) {
                props_started = true;
            } else if props_started {
                return Err(CftlError::Quantifier(format!(
                    "trace quantifier '{}' after a proposition quantifier",
                    item.name()
                )));
            }
            if !seen.insert(item.name()) {
                return Err(CftlError::Quantifier(format!(
                    "variable '{}' bound or used twice in one prefix",
                    item.name()
                )));
            }
        }
        if !self.matrix.is_quantifier_free() {
            return Err(CftlError::Quantifier(
                "emitted matrix must be quantifier-free".into(),
            ));
        }
        let traces: Vec<&str> = free_traces
            .iter()
            .copied()
            .chain(self.trace_vars())
            .collect();
        let props: BTreeSet<&str> = self.prop_vars().into_iter().collect();
        for atom in self.matrix.free_atoms() {
            let indexed = traces
                .iter()
                .any(|v| atom.len() > v.len() + 1 && atom.ends_with(&format!("_{v}")));
            if !indexed && !props.contains(atom.as_str()) {
                return Err(CftlError::Input(format!(
                    "matrix atom '{atom}' is neither trace-indexed nor a quantified proposition"
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        AsciiPrinter.print(self)
    }
}

impl fmt::Display for HyperFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Renders a [`HyperFormula`] in some concrete checker syntax.
pub trait HyperPrinter {
    fn print(&self, f: &HyperFormula) -> String;
}

/// Default printer: `#` header comments, then the prefix and matrix on one
/// line in the module's ASCII convention.
#[derive(Debug, Clone, Copy, Default)]
pub struct AsciiPrinter;

impl HyperPrinter for AsciiPrinter {
    fn print(&self, f: &HyperFormula) -> String {
        let mut out = String::new();
        for line in &f.comments {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        for item in &f.prefix {
            out.push_str(item.quant().keyword());
            out.push(' ');
            out.push_str(item.name());
            out.push_str(". ");
        }
        out.push_str(&f.matrix.to_string());
        out
    }
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

/// The three-trace similarity relation: for a reference trace `r`,
/// `sim(r, t1, t2)` reads "t1 is at least as close to `r` as t2".
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimilaritySpec {
    /// Change-subset order on the propositions of `X`: every position where
    /// the closer trace differs from the reference on some `x ∈ X` must
    /// also differ in the farther trace.
    Subset(BTreeSet<String>),
    /// An explicit quantifier-free formula over atoms suffixed `_p1`
    /// (reference), `_p2` (closer) and `_p3` (farther), instantiated at
    /// concrete trace variables by suffix renaming.
    ExplicitQptl(Formula),
}

impl SimilaritySpec {
    pub fn subset<I, S>(props: I) -> SimilaritySpec
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SimilaritySpec::Subset(props.into_iter().map(Into::into).collect())
    }

    /// Validates and wraps an explicit similarity formula.  Every atom must
    /// carry one of the suffixes `_p1`, `_p2`, `_p3`, and the formula must
    /// be quantifier-free (it is copied into several positions of each
    /// emission, where a quantifier would have to be renamed per copy;
    /// shadowing is rejected rather than renamed throughout this module).
    pub fn explicit(f: Formula) -> Result<SimilaritySpec> {
        if !f.is_quantifier_free() {
            return Err(CftlError::Quantifier(
                "explicit similarity formulas must be quantifier-free".into(),
            ));
        }
        for atom in f.free_atoms() {
            if split_similarity_suffix(&atom).is_none() {
                return Err(CftlError::Input(format!(
                    "similarity atom '{atom}' must end in _p1, _p2 or _p3"
                )));
            }
        }
        Ok(SimilaritySpec::ExplicitQptl(f))
    }

    /// Re-checks the constructor invariants (an [`ExplicitQptl`] value can
    /// be built directly, bypassing [`SimilaritySpec::explicit`]).
    ///
    /// [`ExplicitQptl`]: SimilaritySpec::ExplicitQptl
    fn check(&self) -> Result<()> {
        match self {
            SimilaritySpec::Subset(_) => Ok(()),
            SimilaritySpec::ExplicitQptl(f) => {
                SimilaritySpec::explicit(f.clone()).map(|_| ())
            }
        }
    }

    /// Base propositions the relation reads (used for the trace-equality
    /// encoding and for alphabet bookkeeping).
    pub fn mentioned_atoms(&self) -> BTreeSet<String> {
        match self {
            SimilaritySpec::Subset(x) => x.clone(),
            SimilaritySpec::ExplicitQptl(f) => f
                .free_atoms()
                .iter()
                .filter_map(|a| split_similarity_suffix(a))
                .map(str::to_string)
                .collect(),
        }
    }

    /// The relation at concrete trace variables: "`closer` is at least as
    /// close to `reference` as `farther`".
    fn instantiate(&self, reference: &str, closer: &str, farther: &str) -> Formula {
        match self {
            SimilaritySpec::Subset(x) => Formula::globally(Formula::big_and(x.iter().map(|p| {
                let at = |v: &str| Formula::atom(&format!("{p}_{v}"));
                Formula::or(
                    Formula::iff(at(reference), at(closer)),
                    Formula::not(Formula::iff(at(reference), at(farther))),
                )
            }))),
            SimilaritySpec::ExplicitQptl(f) => f.rename_free(&|a: &str| {
                let (base, suffix) = match split_similarity_suffix(a) {
                    Some(base) => (base, &a[a.len() - 2..]),
                    None => unreachable!("validated at construction"),
                };
                let var = match suffix {
                    "p1" => reference,
                    "p2" => closer,
                    _ => farther,
                };
                format!("{base}_{var}")
            }),
        }
    }
}

/// `Some(base)` when `atom` is `base_p1`, `base_p2` or `base_p3`.
fn split_similarity_suffix(atom: &str) -> Option<&str> {
    for suffix in ["_p1", "_p2", "_p3"] {
        if atom.len() > suffix.len() && atom.ends_with(suffix) {
            return Some(&atom[..atom.len() - suffix.len()]);
        }
    }
    None
}

/// The similarity relation in its canonical three-variable form, over trace
/// variables `p1` (reference), `p2` (closer) and `p3` (farther).
pub fn similarity_formula(spec: &SimilaritySpec) -> Formula {
    spec.instantiate("p1", "p2", "p3")
}

// ---------------------------------------------------------------------------
// Lasso characterization
// ---------------------------------------------------------------------------

/// The full valuation of position `i` as a conjunction of literals over the
/// trace's alphabet.
fn position_valuation(t: &LassoTrace, i: usize) -> Formula {
    Formula::big_and(t.alphabet().iter().map(|p| {
        if t.holds_at(p, i) {
            Formula::atom(p)
        } else {
            Formula::not(Formula::atom(p))
        }
    }))
}

/// A fresh loop-anchor name outside the alphabet and the extra avoid set:
/// `q`, else `q0`, `q1`, ...
fn pick_anchor(alphabet: &BTreeSet<String>, avoid: &BTreeSet<String>) -> String {
    let free = |name: &str| !alphabet.contains(name) && !avoid.contains(name);
    if free("q") {
        return "q".to_string();
    }
    (0..)
        .map(|i| format!("q{i}"))
        .find(|n| free(n))
        .unwrap()
}

/// A formula whose unique model (over the trace's alphabet) is `t`: the
/// first `P` positions are pinned by `X`-guarded full valuations and the
/// loop by a recurrence on one fresh quantified proposition.  A loop of
/// length one needs no anchor and is pinned by `X^P G`.
pub fn lasso_formula(t: &LassoTrace) -> Formula {
    lasso_formula_with_anchor(t, &pick_anchor(t.alphabet(), &BTreeSet::new()))
}

/// [`lasso_formula`] with a caller-chosen loop-anchor name (the caller must
/// keep it clear of the alphabet and of any surrounding binders).
fn lasso_formula_with_anchor(t: &LassoTrace, anchor: &str) -> Formula {
    let (p, l) = t.shape();
    let mut parts: Vec<Formula> =
        (0..p).map(|k| Formula::xnext(k, position_valuation(t, k))).collect();
    if l == 1 {
        parts.push(Formula::xnext(p, Formula::globally(position_valuation(t, p))));
    } else {
        // The anchor holds at the loop start and recurs with the loop
        // period; each occurrence pins one full traversal of the loop.
        let body = Formula::big_and(
            (0..l)
                .map(|j| Formula::xnext(j, position_valuation(t, p + j)))
                .chain(std::iter::once(Formula::xnext(l, Formula::atom(anchor)))),
        );
        parts.push(Formula::Exists(
            anchor.to_string(),
            Box::new(Formula::and(
                Formula::xnext(p, Formula::atom(anchor)),
                Formula::globally(Formula::implies(Formula::atom(anchor), body)),
            )),
        ));
    }
    Formula::big_and(parts)
}

// ---------------------------------------------------------------------------
// Subscripting and proposition hoisting
// ---------------------------------------------------------------------------

/// Indexes every free atom with a trace variable (`a` on `v` becomes
/// `a_v`); bound proposition names are left alone.
fn subscript(f: &Formula, var: &str) -> Formula {
    f.rename_free(&|a: &str| format!("{a}_{var}"))
}

/// Pulls every proposition quantifier of `f` to the front, flipping the
/// kind under negative polarity.  Hoisting is supported through the Boolean
/// connectives only; a quantifier under a temporal operator or under `<->`
/// has no prenex equivalent at this level and is rejected, as is a name
/// bound twice (shadowing is rejected rather than renamed).
fn hoist_props(f: &Formula, positive: bool) -> Result<(Vec<(Quant, String)>, Formula)> {
    match f {
        Formula::Exists(q, body) | Formula::Forall(q, body) => {
            let mut kind = if matches!(f, Formula::Exists(..)) {
                Quant::Exists
            } else {
                Quant::Forall
            };
            if !positive {
                kind = kind.flip();
            }
            let (inner, matrix) = hoist_props(body, positive)?;
            if inner.iter().any(|(_, n)| n == q) {
                return Err(CftlError::Quantifier(format!(
                    "proposition '{q}' is shadowed; rename one binder"
                )));
            }
            let mut quants = vec![(kind, q.clone())];
            quants.extend(inner);
            Ok((quants, matrix))
        }
        Formula::Not(x) => {
            let (quants, matrix) = hoist_props(x, !positive)?;
            Ok((quants, Formula::not(matrix)))
        }
        Formula::And(l, r) | Formula::Or(l, r) => {
            let (lq, lm) = hoist_props(l, positive)?;
            let (rq, rm) = hoist_props(r, positive)?;
            let combine = if matches!(f, Formula::And(..)) {
                Formula::and
            } else {
                Formula::or
            };
            Ok((merge_disjoint(lq, rq)?, combine(lm, rm)))
        }
        Formula::Implies(l, r) => {
            let (lq, lm) = hoist_props(l, !positive)?;
            let (rq, rm) = hoist_props(r, positive)?;
            Ok((merge_disjoint(lq, rq)?, Formula::implies(lm, rm)))
        }
        _ => {
            if f.is_quantifier_free() {
                Ok((Vec::new(), f.clone()))
            } else {
                Err(CftlError::Quantifier(
                    "proposition quantifier under a temporal operator or '<->' \
                     cannot be hoisted to the prefix"
                        .into(),
                ))
            }
        }
    }
}

/// Concatenates two hoisted quantifier runs, rejecting name reuse (two
/// same-named binders would collide once pooled in one prefix).
fn merge_disjoint(
    mut l: Vec<(Quant, String)>,
    r: Vec<(Quant, String)>,
) -> Result<Vec<(Quant, String)>> {
    for (_, n) in &r {
        if l.iter().any(|(_, m)| m == n) {
            return Err(CftlError::Quantifier(format!(
                "proposition '{n}' is quantified twice; rename one binder"
            )));
        }
    }
    l.extend(r);
    Ok(l)
}

// ---------------------------------------------------------------------------
// Conditional transcription
// ---------------------------------------------------------------------------

/// Emission knobs shared by [`emit_sat`] and [`emit_trace_check`].
#[derive(Debug, Clone)]
pub struct EmitOptions {
    /// Name of the reference trace variable.
    pub reference: String,
    /// Interleave the quantifier blocks of distinct conditionals to reduce
    /// alternations.  Off by default: the faithful shape concatenates the
    /// blocks in formula order.
    pub flatten: bool,
}

impl Default for EmitOptions {
    fn default() -> EmitOptions {
        EmitOptions { reference: "p".to_string(), flatten: false }
    }
}

/// Shared state of one emission: similarity, universe guard, reference
/// variable, the fresh-name counter and collected header comments.
struct Emitter<'a> {
    sim: &'a SimilaritySpec,
    universe: &'a Formula,
    reference: String,
    next_var: usize,
    conditionals: usize,
    comments: Vec<String>,
}

impl<'a> Emitter<'a> {
    fn new(sim: &'a SimilaritySpec, universe: &'a Formula, reference: &str) -> Result<Emitter<'a>> {
        check_reference_name(reference)?;
        sim.check()?;
        if !universe.is_quantifier_free() {
            return Err(CftlError::Quantifier(
                "the universe formula must be quantifier-free".into(),
            ));
        }
        Ok(Emitter {
            sim,
            universe,
            reference: reference.to_string(),
            next_var: 0,
            conditionals: 0,
            comments: Vec::new(),
        })
    }

    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("p{}", self.next_var)
    }

    /// Universe guard on trace `v`.
    fn u(&self, v: &str) -> Formula {
        subscript(self.universe, v)
    }

    fn not_u(&self, v: &str) -> Formula {
        Formula::not(self.u(v))
    }

    /// "`below` is at least as close to the reference as `above`".
    fn r(&self, below: &str, above: &str) -> Formula {
        self.sim.instantiate(&self.reference, below, above)
    }

    /// One conditional as a trace-quantifier run plus its matrix;
    /// antecedent and consequent must be quantifier-free.
    fn conditional(
        &mut self,
        op: CfOp,
        phi: &Formula,
        psi: &Formula,
    ) -> Result<(Vec<(Quant, String)>, Formula)> {
        if !phi.is_quantifier_free() || !psi.is_quantifier_free() {
            return Err(CftlError::Quantifier(format!(
                "operands of '{}' must be quantifier-free to be emitted \
                 (they are copied once per quantified trace)",
                op.keyword()
            )));
        }
        let block = match op {
            CfOp::Would => self.would_block(phi, psi),
            CfOp::Might => self.might_block(phi, psi),
            CfOp::UWould => self.uwould_block(phi, psi),
            CfOp::EMight => self.emight_block(phi, psi),
            CfOp::WouldMin => self.would_min_block(phi, psi),
            CfOp::MightMin => self.might_min_block(phi, psi),
            CfOp::UWouldMin => self.uwould_min_block(phi, psi),
            CfOp::EMightMin => self.emight_min_block(phi, psi),
        };
        self.conditionals += 1;
        let derived = if op == CfOp::MightMin { "" } else { " (derived prenex transcription)" };
        self.comments.push(format!(
            "conditional {}: '{}' over traces {}..{}{}",
            self.conditionals,
            op.keyword(),
            block.0.first().map(|(_, n)| n.as_str()).unwrap_or("?"),
            block.0.last().map(|(_, n)| n.as_str()).unwrap_or("?"),
            derived
        ));
        Ok(block)
    }

    /// `exists w. forall a.`: some universe φ-world satisfies the base
    /// `would` against every universe φ-world at least as close.
    fn would_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let w = self.fresh();
        let a = self.fresh();
        let matrix = Formula::implies(
            Formula::and(self.u(&a), subscript(phi, &a)),
            Formula::big_and([
                self.u(&w),
                subscript(phi, &w),
                Formula::implies(self.r(&a, &w), subscript(psi, &a)),
            ]),
        );
        (vec![(Quant::Exists, w), (Quant::Forall, a)], matrix)
    }

    /// `exists w. forall a. exists c.`: the antecedent is satisfiable in the
    /// universe and every universe φ-world sees a φ∧ψ-world at least as
    /// close.
    fn might_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let w = self.fresh();
        let a = self.fresh();
        let c = self.fresh();
        let matrix = Formula::big_and([
            self.u(&w),
            subscript(phi, &w),
            Formula::implies(
                Formula::and(self.u(&a), subscript(phi, &a)),
                Formula::big_and([
                    self.u(&c),
                    subscript(phi, &c),
                    subscript(psi, &c),
                    self.r(&c, &a),
                ]),
            ),
        ]);
        (vec![(Quant::Exists, w), (Quant::Forall, a), (Quant::Exists, c)], matrix)
    }

    /// `forall a1. exists c. forall a3.`: below every universe φ-world sits
    /// a φ-world whose φ-cone (in the universe) satisfies ψ.
    fn uwould_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let a1 = self.fresh();
        let c = self.fresh();
        let a3 = self.fresh();
        let matrix = Formula::implies(
            Formula::and(self.u(&a1), subscript(phi, &a1)),
            Formula::big_and([
                self.u(&c),
                subscript(phi, &c),
                self.r(&c, &a1),
                Formula::implies(
                    Formula::big_and([self.u(&a3), subscript(phi, &a3), self.r(&a3, &c)]),
                    subscript(psi, &a3),
                ),
            ]),
        );
        (vec![(Quant::Forall, a1), (Quant::Exists, c), (Quant::Forall, a3)], matrix)
    }

    /// `exists w. forall a. exists c.`: some universe φ-world has a
    /// φ∧ψ-world at least as close below every φ-world of its cone.
    fn emight_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let w = self.fresh();
        let a = self.fresh();
        let c = self.fresh();
        let matrix = Formula::big_and([
            self.u(&w),
            subscript(phi, &w),
            Formula::implies(
                Formula::big_and([self.u(&a), subscript(phi, &a), self.r(&a, &w)]),
                Formula::big_and([
                    self.u(&c),
                    subscript(phi, &c),
                    subscript(psi, &c),
                    self.r(&c, &a),
                ]),
            ),
        ]);
        (vec![(Quant::Exists, w), (Quant::Forall, a), (Quant::Exists, c)], matrix)
    }

    /// The anchored `exists p1. forall p2. exists p3. forall p4.` form of
    /// the minimal `might` conditional, with the complement-of-the-universe
    /// coverage clause folded into the `forall p4` block.
    fn might_min_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let w = self.fresh();
        let a = self.fresh();
        let c = self.fresh();
        let d = self.fresh();
        let outer_cone = Formula::implies(
            self.u(&d),
            Formula::and(
                Formula::implies(
                    Formula::not(self.r(&c, &d)),
                    Formula::implies(
                        Formula::not(subscript(phi, &d)),
                        Formula::not(subscript(psi, &d)),
                    ),
                ),
                Formula::implies(self.r(&c, &d), subscript(phi, &d)),
            ),
        );
        let matrix = Formula::big_and([
            self.u(&w),
            subscript(phi, &w),
            Formula::implies(
                self.u(&a),
                Formula::implies(
                    subscript(phi, &a),
                    Formula::big_and([
                        self.u(&c),
                        self.r(&c, &a),
                        subscript(phi, &c),
                        subscript(psi, &c),
                        outer_cone,
                    ]),
                ),
            ),
            Formula::implies(self.not_u(&d), subscript(phi, &d)),
        ]);
        (
            vec![
                (Quant::Exists, w),
                (Quant::Forall, a),
                (Quant::Exists, c),
                (Quant::Forall, d),
            ],
            matrix,
        )
    }

    /// Pointwise form of the vacuous disjunct shared by the universal
    /// minimal conditionals: the antecedent is unsatisfiable in the
    /// universe, nothing satisfies the consequent there, and everything
    /// outside the universe satisfies the antecedent.
    fn unsat_disjunct(&self, phi: &Formula, psi: &Formula, a: &str) -> Formula {
        Formula::big_and([
            Formula::implies(self.u(a), Formula::not(subscript(psi, a))),
            Formula::implies(self.not_u(a), subscript(phi, a)),
            Formula::implies(self.u(a), Formula::not(subscript(phi, a))),
        ])
    }

    /// `exists c. forall a. forall d1. forall c2. forall e. exists d2.`:
    /// either the vacuous disjunct holds, or some universe φ-world
    /// witnesses the base `would`, nothing outside the universe or
    /// satisfying ψ inside it escapes φ, and every witness sits above every
    /// universe world missing from φ.
    fn would_min_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let c = self.fresh();
        let a = self.fresh();
        let d1 = self.fresh();
        let c2 = self.fresh();
        let e = self.fresh();
        let d2 = self.fresh();
        let witness_and_coverage = Formula::big_and([
            self.u(&c),
            subscript(phi, &c),
            Formula::implies(self.not_u(&d1), subscript(phi, &d1)),
            Formula::implies(
                Formula::and(self.u(&d1), subscript(psi, &d1)),
                subscript(phi, &d1),
            ),
            Formula::implies(
                Formula::big_and([self.u(&d1), self.r(&d1, &c), subscript(phi, &d1)]),
                subscript(psi, &d1),
            ),
        ]);
        let witnesses_dominate = Formula::implies(
            Formula::big_and([
                self.u(&c2),
                subscript(phi, &c2),
                Formula::implies(
                    Formula::big_and([self.u(&d2), self.r(&d2, &c2), subscript(phi, &d2)]),
                    subscript(psi, &d2),
                ),
                self.u(&e),
                Formula::not(subscript(phi, &e)),
            ]),
            self.r(&e, &c2),
        );
        let matrix = Formula::or(
            self.unsat_disjunct(phi, psi, &a),
            Formula::and(witness_and_coverage, witnesses_dominate),
        );
        (
            vec![
                (Quant::Exists, c),
                (Quant::Forall, a),
                (Quant::Forall, d1),
                (Quant::Forall, c2),
                (Quant::Forall, e),
                (Quant::Exists, d2),
            ],
            matrix,
        )
    }

    /// Nine-variable transcription of the minimal `uwould` conditional:
    /// the vacuous disjunct, or the base `uwould` with outside coverage
    /// plus minimality — every universe world missing from the antecedent,
    /// once added, deprives some antecedent world (or itself) of all
    /// surviving support.  "Adding" the missing world is encoded by trace
    /// equality over every mentioned proposition.
    fn uwould_min_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let a = self.fresh();
        let w1 = self.fresh();
        let c = self.fresh();
        let d1 = self.fresh();
        let w = self.fresh();
        let x = self.fresh();
        let d2 = self.fresh();
        let s = self.fresh();
        let e = self.fresh();
        let base = Formula::and(
            Formula::implies(self.not_u(&w1), subscript(phi, &w1)),
            Formula::implies(
                Formula::and(self.u(&w1), subscript(phi, &w1)),
                Formula::big_and([
                    self.u(&c),
                    subscript(phi, &c),
                    self.r(&c, &w1),
                    Formula::implies(
                        Formula::big_and([self.u(&d1), subscript(phi, &d1), self.r(&d1, &c)]),
                        subscript(psi, &d1),
                    ),
                ]),
            ),
        );
        let mut mentioned: BTreeSet<String> = phi.free_atoms();
        mentioned.extend(psi.free_atoms());
        mentioned.extend(self.universe.free_atoms());
        mentioned.extend(self.sim.mentioned_atoms());
        // x stands for a world of φ ∪ {w}; membership of the added world is
        // trace equality over every proposition the formulas can read.
        let equals_w = Formula::globally(Formula::big_and(mentioned.iter().map(|p| {
            Formula::iff(
                Formula::atom(&format!("{p}_{x}")),
                Formula::atom(&format!("{p}_{w}")),
            )
        })));
        let not_self_supported_above_w = Formula::big_or([
            Formula::not(subscript(psi, &w)),
            Formula::big_and([
                self.u(&d2),
                subscript(phi, &d2),
                self.r(&d2, &w),
                Formula::not(subscript(psi, &d2)),
            ]),
            Formula::not(self.r(&w, &x)),
        ]);
        let no_surviving_support_below_x = Formula::not(Formula::big_and([
            self.u(&s),
            subscript(phi, &s),
            Formula::implies(
                Formula::big_and([self.u(&e), subscript(phi, &e), self.r(&e, &s)]),
                subscript(psi, &e),
            ),
            Formula::or(subscript(psi, &w), Formula::not(self.r(&w, &s))),
            self.r(&s, &x),
        ]));
        let minimality = Formula::implies(
            Formula::and(self.u(&w), Formula::not(subscript(phi, &w))),
            Formula::big_and([
                self.u(&x),
                Formula::or(subscript(phi, &x), equals_w),
                not_self_supported_above_w,
                no_surviving_support_below_x,
            ]),
        );
        let matrix = Formula::or(
            self.unsat_disjunct(phi, psi, &a),
            Formula::and(base, minimality),
        );
        (
            vec![
                (Quant::Forall, a),
                (Quant::Forall, w1),
                (Quant::Exists, c),
                (Quant::Forall, d1),
                (Quant::Forall, w),
                (Quant::Exists, x),
                (Quant::Exists, d2),
                (Quant::Forall, s),
                (Quant::Exists, e),
            ],
            matrix,
        )
    }

    /// Seven-variable transcription of the minimal `emight` conditional:
    /// the base `emight` witness, coverage (everything outside the universe
    /// and every universe ψ-world already satisfies φ), no φ∧ψ-world below
    /// any missing world, and every witness above every missing world.
    fn emight_min_block(&mut self, phi: &Formula, psi: &Formula) -> (Vec<(Quant, String)>, Formula) {
        let v1 = self.fresh();
        let v2 = self.fresh();
        let v3 = self.fresh();
        let w1 = self.fresh();
        let w = self.fresh();
        let w2 = self.fresh();
        let w3 = self.fresh();
        let coverage = Formula::and(
            Formula::implies(self.not_u(&v2), subscript(phi, &v2)),
            Formula::implies(
                Formula::and(self.u(&v2), subscript(psi, &v2)),
                subscript(phi, &v2),
            ),
        );
        let base = Formula::implies(
            Formula::big_and([self.u(&v2), subscript(phi, &v2), self.r(&v2, &v1)]),
            Formula::big_and([
                self.u(&v3),
                subscript(phi, &v3),
                subscript(psi, &v3),
                self.r(&v3, &v2),
            ]),
        );
        let witnesses_dominate = Formula::implies(
            Formula::big_and([
                self.u(&w1),
                subscript(phi, &w1),
                Formula::implies(
                    Formula::big_and([self.u(&w2), subscript(phi, &w2), self.r(&w2, &w1)]),
                    Formula::big_and([
                        self.u(&w3),
                        subscript(phi, &w3),
                        subscript(psi, &w3),
                        self.r(&w3, &w2),
                    ]),
                ),
                self.u(&w),
                Formula::not(subscript(phi, &w)),
            ]),
            self.r(&w, &w1),
        );
        let nothing_good_below_missing = Formula::implies(
            Formula::big_and([
                self.u(&w),
                Formula::not(subscript(phi, &w)),
                self.u(&w3),
                subscript(phi, &w3),
                subscript(psi, &w3),
            ]),
            Formula::not(self.r(&w3, &w)),
        );
        let matrix = Formula::big_and([
            self.u(&v1),
            subscript(phi, &v1),
            coverage,
            base,
            witnesses_dominate,
            nothing_good_below_missing,
        ]);
        (
            vec![
                (Quant::Exists, v1),
                (Quant::Forall, v2),
                (Quant::Exists, v3),
                (Quant::Forall, w1),
                (Quant::Forall, w),
                (Quant::Exists, w2),
                (Quant::Forall, w3),
            ],
            matrix,
        )
    }
}

/// Generated trace variables are `p1`, `p2`, ...; the reference name must
/// stay clear of them and be a plain identifier.
fn check_reference_name(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let head_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    if !head_ok || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(CftlError::Input(format!(
            "'{name}' is not a valid trace variable name"
        )));
    }
    if name.len() > 1 && name.starts_with('p') && name[1..].chars().all(|c| c.is_ascii_digit()) {
        return Err(CftlError::Input(format!(
            "reference variable '{name}' collides with generated trace names"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Top-level emissions
// ---------------------------------------------------------------------------

/// One conditional as a free-standing emission: the reference trace
/// variable stays free (callers quantify it).
pub fn emit_fo_counterfactual(
    op: CfOp,
    phi: &Formula,
    psi: &Formula,
    sim: &SimilaritySpec,
    universe: &Formula,
    reference: &str,
) -> Result<HyperFormula> {
    let mut em = Emitter::new(sim, universe, reference)?;
    let (vars, matrix) = em.conditional(op, phi, psi)?;
    let out = HyperFormula {
        comments: em.comments,
        prefix: vars.into_iter().map(|(q, n)| PrefixItem::Trace(q, n)).collect(),
        matrix,
    };
    out.validate(&[reference])?;
    Ok(out)
}

/// Satisfiability emission: `exists p.` around the conjunction of all
/// conditional blocks of `xi`, with plain QPTL parts subscripted by the
/// reference variable and their proposition quantifiers hoisted behind the
/// trace prefix.
pub fn emit_sat(xi: &CfFormula, sim: &SimilaritySpec, universe: &Formula) -> Result<HyperFormula> {
    emit_sat_with(xi, sim, universe, &EmitOptions::default())
}

/// [`emit_sat`] with explicit options.
pub fn emit_sat_with(
    xi: &CfFormula,
    sim: &SimilaritySpec,
    universe: &Formula,
    opts: &EmitOptions,
) -> Result<HyperFormula> {
    let mut em = Emitter::new(sim, universe, &opts.reference)?;
    let (blocks, props, matrix) = walk(&mut em, xi)?;
    let leading = (Quant::Exists, opts.reference.clone());
    let out = assemble(em.comments, leading, blocks, props, matrix, opts.flatten);
    out.validate(&[])?;
    Ok(out)
}

/// Trace-check emission: `forall p.` with the pinned lasso as premise —
/// the emission holds iff the given trace satisfies `xi`.  The lasso's
/// loop anchor lands in the premise, so its quantifier flips to `forall`.
pub fn emit_trace_check(
    t: &LassoTrace,
    xi: &CfFormula,
    sim: &SimilaritySpec,
    universe: &Formula,
) -> Result<HyperFormula> {
    emit_trace_check_with(t, xi, sim, universe, &EmitOptions::default())
}

/// [`emit_trace_check`] with explicit options.
pub fn emit_trace_check_with(
    t: &LassoTrace,
    xi: &CfFormula,
    sim: &SimilaritySpec,
    universe: &Formula,
    opts: &EmitOptions,
) -> Result<HyperFormula> {
    let mut em = Emitter::new(sim, universe, &opts.reference)?;
    let (blocks, props, matrix) = walk(&mut em, xi)?;
    let mut avoid: BTreeSet<String> = props.iter().map(|(_, n)| n.clone()).collect();
    avoid.insert(opts.reference.clone());
    let anchor = pick_anchor(t.alphabet(), &avoid);
    let premise = subscript(&lasso_formula_with_anchor(t, &anchor), &opts.reference);
    let (lasso_props, lasso_matrix) = hoist_props(&premise, false)?;
    let mut comments = em.comments;
    comments.insert(
        0,
        "trace check: the reference trace is pinned to the given lasso".to_string(),
    );
    let mut all_props = lasso_props;
    all_props.extend(props);
    let leading = (Quant::Forall, opts.reference.clone());
    let out = assemble(
        comments,
        leading,
        blocks,
        all_props,
        Formula::implies(lasso_matrix, matrix),
        opts.flatten,
    );
    out.validate(&[])?;
    Ok(out)
}

/// Walks a top-level counterfactual combination into per-conditional trace
/// blocks, pooled proposition quantifiers and the combined matrix.
/// Negation flips every quantifier of its subtree and negates the matrix;
/// conjunction concatenates.
fn walk(
    em: &mut Emitter<'_>,
    xi: &CfFormula,
) -> Result<(Vec<Vec<(Quant, String)>>, Vec<(Quant, String)>, Formula)> {
    match xi {
        CfFormula::Plain(f) => {
            let (props, matrix) = hoist_props(&subscript(f, &em.reference.clone()), true)?;
            Ok((Vec::new(), props, matrix))
        }
        CfFormula::Cf(op, phi, psi) => {
            let (vars, matrix) = em.conditional(*op, phi, psi)?;
            Ok((vec![vars], Vec::new(), matrix))
        }
        CfFormula::CfNot(inner) => {
            let (mut blocks, mut props, matrix) = walk(em, inner)?;
            for block in &mut blocks {
                for (q, _) in block.iter_mut() {
                    *q = q.flip();
                }
            }
            for (q, _) in props.iter_mut() {
                *q = q.flip();
            }
            Ok((blocks, props, Formula::not(matrix)))
        }
        CfFormula::CfAnd(l, r) => {
            let (lb, lp, lm) = walk(em, l)?;
            let (rb, rp, rm) = walk(em, r)?;
            let mut blocks = lb;
            blocks.extend(rb);
            Ok((blocks, merge_disjoint(lp, rp)?, Formula::and(lm, rm)))
        }
    }
}

/// Builds the final prefix: the leading reference quantifier, the trace
/// blocks (concatenated, or interleaved by polarity when flattening), then
/// the proposition quantifiers.
fn assemble(
    mut comments: Vec<String>,
    leading: (Quant, String),
    blocks: Vec<Vec<(Quant, String)>>,
    props: Vec<(Quant, String)>,
    matrix: Formula,
    flatten: bool,
) -> HyperFormula {
    let traces = if flatten {
        interleave_blocks(leading.0, &blocks)
    } else {
        blocks.into_iter().flatten().collect()
    };
    if !props.is_empty() {
        let names: Vec<&str> = props.iter().map(|(_, n)| n.as_str()).collect();
        comments.push(format!("trailing proposition quantifiers: {}", names.join(", ")));
    }
    let mut prefix = vec![PrefixItem::Trace(leading.0, leading.1)];
    prefix.extend(traces.into_iter().map(|(q, n)| PrefixItem::Trace(q, n)));
    prefix.extend(props.into_iter().map(|(q, n)| PrefixItem::Prop(q, n)));
    HyperFormula { comments, prefix, matrix }
}

/// Merges the blocks into one run with as few polarity alternations as the
/// longest block needs: repeatedly drain every block's leading run of the
/// current polarity, then flip.  Blocks bind disjoint variables and their
/// internal order is preserved, so any interleaving is sound.
fn interleave_blocks(start: Quant, blocks: &[Vec<(Quant, String)>]) -> Vec<(Quant, String)> {
    let total: usize = blocks.iter().map(Vec::len).sum();
    let mut heads = vec![0usize; blocks.len()];
    let mut out = Vec::with_capacity(total);
    let mut polarity = start;
    while out.len() < total {
        for (block, head) in blocks.iter().zip(heads.iter_mut()) {
            while *head < block.len() && block[*head].0 == polarity {
                out.push(block[*head].clone());
                *head += 1;
            }
        }
        polarity = polarity.flip();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextWorld, EvaluationContext};
    use crate::formula::{parse_formula, parse_plain};
    use crate::ltl::{eval_ltl_at, eval_qptl_bounded, EvalBounds};
    use crate::order::Preorder;
    use crate::trace::align_lassos;
    use crate::worldset::WorldSet;
    use crate::{cf, trace};
    use std::collections::BTreeMap;

    fn f(s: &str) -> Formula {
        parse_plain(s).unwrap()
    }

    // -- similarity ---------------------------------------------------------

    #[test]
    fn subset_similarity_renders_the_documented_shape() {
        let sim = SimilaritySpec::subset(["u"]);
        assert_eq!(
            similarity_formula(&sim).to_string(),
            "G ((u_p1 <-> u_p2) | !(u_p1 <-> u_p3))"
        );
        assert_eq!(
            similarity_formula(&SimilaritySpec::subset(Vec::<String>::new())).to_string(),
            "G true"
        );
    }

    #[test]
    fn explicit_similarity_passes_through_and_instantiates_by_suffix() {
        let spec = SimilaritySpec::explicit(f("F (a_p2 -> a_p1 & a_p3)")).unwrap();
        assert_eq!(similarity_formula(&spec).to_string(), "F (a_p2 -> a_p1 & a_p3)");
        assert_eq!(
            spec.instantiate("p", "x", "y").to_string(),
            "F (a_x -> a_p & a_y)"
        );
        assert_eq!(spec.mentioned_atoms(), ["a".to_string()].into());
    }

    #[test]
    fn explicit_similarity_rejects_bad_atoms_and_quantifiers() {
        assert!(SimilaritySpec::explicit(f("a_p1 & b")).is_err());
        assert!(SimilaritySpec::explicit(f("exists q. q & a_p1")).is_err());
    }

    // -- lasso characterization --------------------------------------------

    #[test]
    fn lasso_formula_matches_the_documented_examples() {
        let empty = trace::LassoTrace::parse_with_alphabet("|{}", &["a", "b"].map(String::from).into())
            .unwrap();
        assert_eq!(lasso_formula(&empty).to_string(), "G (!a & !b)");

        let spike = LassoTrace::parse("{a}|{}").unwrap();
        assert_eq!(lasso_formula(&spike).to_string(), "a & X G !a");

        let blink = LassoTrace::parse("|{a}{}").unwrap();
        assert_eq!(
            lasso_formula(&blink).to_string(),
            "exists q. q & G (q -> a & X !a & X X q)"
        );
    }

    #[test]
    fn lasso_formula_has_its_trace_as_unique_model() {
        let bounds = EvalBounds::default();
        for text in ["|{}", "{a}|{}", "|{a}{}", "{a}{}{a,b}|{b}{}", "{a,b}|{a}{b}{}"] {
            let t = LassoTrace::parse_with_alphabet(text, &["a", "b"].map(String::from).into())
                .unwrap();
            let formula = lasso_formula(&t);
            assert!(eval_qptl_bounded(&t, &formula, &bounds).unwrap().value, "{text}");
            // Flipping any one proposition at any position up to a full
            // period past the loop entry must falsify the formula.
            let (p, l) = t.shape();
            for i in 0..p + l {
                for prop in ["a", "b"] {
                    let mut letters: Vec<_> = (0..p + l).map(|k| t.letter_at(k).clone()).collect();
                    if !letters[i].remove(prop) {
                        letters[i].insert(prop.to_string());
                    }
                    let mutated = LassoTrace::new(
                        letters[..p].to_vec(),
                        letters[p..].to_vec(),
                        t.alphabet().clone(),
                    )
                    .unwrap();
                    if mutated == t {
                        continue; // the flip landed on an equivalent representation
                    }
                    assert!(
                        !eval_qptl_bounded(&mutated, &formula, &bounds).unwrap().value,
                        "{text} mutated at {i}/{prop}"
                    );
                }
            }
        }
    }

    #[test]
    fn lasso_anchor_avoids_the_alphabet() {
        let t = LassoTrace::parse("|{q}{}").unwrap();
        let formula = lasso_formula(&t);
        assert_eq!(formula.binder_names(), ["q0".to_string()].into());
        assert!(eval_qptl_bounded(&t, &formula, &EvalBounds::default()).unwrap().value);
    }

    // -- single-conditional emissions ---------------------------------------

    fn tiny_emission(op: CfOp) -> HyperFormula {
        emit_fo_counterfactual(
            op,
            &f("a"),
            &f("b"),
            &SimilaritySpec::subset(["x"]),
            &f("c"),
            "p",
        )
        .unwrap()
    }

    fn prefix_shape(h: &HyperFormula) -> String {
        h.prefix
            .iter()
            .map(|i| match i.quant() {
                Quant::Exists => 'E',
                Quant::Forall => 'A',
            })
            .collect()
    }

    #[test]
    fn conditional_prefixes_are_frozen() {
        let expect = [
            (CfOp::Would, "EA"),
            (CfOp::Might, "EAE"),
            (CfOp::UWould, "AEA"),
            (CfOp::EMight, "EAE"),
            (CfOp::WouldMin, "EAAAAE"),
            (CfOp::MightMin, "EAEA"),
            (CfOp::UWouldMin, "AAEAAEEAE"),
            (CfOp::EMightMin, "EAEAAEA"),
        ];
        for (op, shape) in expect {
            let h = tiny_emission(op);
            assert_eq!(prefix_shape(&h), shape, "{}", op.keyword());
            assert_eq!(h.trace_vars().len(), shape.len(), "{}", op.keyword());
            h.validate(&["p"]).unwrap();
            let comment = &h.comments[0];
            assert_eq!(
                comment.contains("derived prenex transcription"),
                op != CfOp::MightMin,
                "{comment}"
            );
        }
    }

    #[test]
    fn might_min_emission_matches_the_anchored_display() {
        let h = tiny_emission(CfOp::MightMin);
        let sim = |a: &str, b: &str| format!("G ((x_p <-> x_{a}) | !(x_p <-> x_{b}))");
        let expected = format!(
            "exists p1. forall p2. exists p3. forall p4. \
             c_p1 & a_p1 & (c_p2 -> a_p2 -> c_p3 & {} & a_p3 & b_p3 & \
             (c_p4 -> (!{} -> !a_p4 -> !b_p4) & ({} -> a_p4))) & (!c_p4 -> a_p4)",
            sim("p3", "p2"),
            sim("p3", "p4"),
            sim("p3", "p4"),
        );
        assert_eq!(h.to_text(), format!("# {}\n{}", h.comments[0], expected));
    }

    #[test]
    fn reference_name_hygiene_is_enforced() {
        let sim = SimilaritySpec::subset(["x"]);
        for bad in ["p2", "p10", "", "1t", "a-b"] {
            assert!(
                emit_fo_counterfactual(CfOp::Would, &f("a"), &f("b"), &sim, &f("c"), bad).is_err(),
                "{bad}"
            );
        }
        emit_fo_counterfactual(CfOp::Would, &f("a"), &f("b"), &sim, &f("c"), "ref").unwrap();
    }

    #[test]
    fn quantified_operands_and_universes_are_rejected() {
        let sim = SimilaritySpec::subset(["x"]);
        let quantified = f("exists q. q & a");
        assert!(emit_fo_counterfactual(
            CfOp::Would, &quantified, &f("b"), &sim, &f("c"), "p"
        )
        .is_err());
        assert!(emit_fo_counterfactual(
            CfOp::Would, &f("a"), &f("b"), &sim, &quantified, "p"
        )
        .is_err());
    }

    // -- full emissions ------------------------------------------------------

    #[test]
    fn plain_truth_emits_the_minimal_formula() {
        let h = emit_sat(
            &CfFormula::Plain(Formula::True),
            &SimilaritySpec::subset(["x"]),
            &f("c"),
        )
        .unwrap();
        assert_eq!(h.to_text(), "exists p. true");
    }

    #[test]
    fn sat_emission_concatenates_blocks_and_pools_plain_parts() {
        let xi = CfFormula::cf_and(
            CfFormula::cf(CfOp::MightMin, f("a"), f("b")),
            CfFormula::cf_and(
                CfFormula::Plain(f("exists q. G (q -> y)")),
                CfFormula::cf(CfOp::Would, f("a"), f("b")),
            ),
        );
        let h = emit_sat(&xi, &SimilaritySpec::subset(["x"]), &f("c")).unwrap();
        assert_eq!(
            h.prefix
                .iter()
                .map(|i| format!(
                    "{}{}",
                    match i.quant() {
                        Quant::Exists => "E",
                        Quant::Forall => "A",
                    },
                    i.name()
                ))
                .collect::<Vec<_>>(),
            ["Ep", "Ep1", "Ap2", "Ep3", "Ap4", "Ep5", "Ap6", "Eq"]
        );
        assert!(matches!(h.prefix.last().unwrap(), PrefixItem::Prop(Quant::Exists, _)));
        // Matrix conjunct arity mirrors the conditional combination.
        assert_eq!(h.matrix.to_string().matches("G (q -> y_p)").count(), 1);
        h.validate(&[]).unwrap();
    }

    #[test]
    fn negation_flips_every_quantifier_of_its_subtree() {
        let xi = CfFormula::cf_not(CfFormula::cf(CfOp::MightMin, f("a"), f("b")));
        let h = emit_sat(&xi, &SimilaritySpec::subset(["x"]), &f("c")).unwrap();
        assert_eq!(prefix_shape(&h), "EAEAE");
        assert!(matches!(h.matrix, Formula::Not(_)));
    }

    #[test]
    fn pooled_proposition_collisions_are_rejected() {
        let xi = CfFormula::cf_and(
            CfFormula::Plain(f("exists q. q & a")),
            CfFormula::Plain(f("exists q. q & b")),
        );
        assert!(emit_sat(&xi, &SimilaritySpec::subset(["x"]), &f("c")).is_err());
        let under_temporal = CfFormula::Plain(f("G (exists q. q & a)"));
        assert!(emit_sat(&under_temporal, &SimilaritySpec::subset(["x"]), &f("c")).is_err());
    }

    #[test]
    fn trace_check_leads_with_a_universal_reference() {
        let t = LassoTrace::parse_with_alphabet("|{a}{}", &["a", "b", "x"].map(String::from).into())
            .unwrap();
        let xi = CfFormula::cf(CfOp::MightMin, f("a"), f("b"));
        let h = emit_trace_check(&t, &xi, &SimilaritySpec::subset(["x"]), &f("c")).unwrap();
        assert_eq!(prefix_shape(&h), "AEAEAA");
        assert_eq!(h.trace_vars(), ["p", "p1", "p2", "p3", "p4"]);
        // The loop anchor is a premise now: its quantifier flipped to forall.
        assert_eq!(h.prop_vars(), ["q"]);
        assert!(matches!(h.prefix.last().unwrap(), PrefixItem::Prop(Quant::Forall, _)));
        assert!(matches!(h.matrix, Formula::Implies(..)));
        h.validate(&[]).unwrap();
    }

    #[test]
    fn trace_check_anchor_avoids_plain_part_binders() {
        let t = LassoTrace::parse_with_alphabet("|{a}{}", &["a", "x"].map(String::from).into())
            .unwrap();
        let xi = CfFormula::Plain(f("exists q. G (q -> a)"));
        let h = emit_trace_check(&t, &xi, &SimilaritySpec::subset(["x"]), &f("a")).unwrap();
        assert_eq!(h.prop_vars(), ["q0", "q"]);
        h.validate(&[]).unwrap();
    }

    #[test]
    fn flattening_interleaves_blocks_by_polarity() {
        let xi = CfFormula::cf_and(
            CfFormula::cf(CfOp::MightMin, f("a"), f("b")),
            CfFormula::cf(CfOp::MightMin, f("a"), f("!b")),
        );
        let sim = SimilaritySpec::subset(["x"]);
        let plain = emit_sat(&xi, &sim, &f("c")).unwrap();
        assert_eq!(prefix_shape(&plain), "EEAEAEAEA");
        let opts = EmitOptions { flatten: true, ..EmitOptions::default() };
        let flat = emit_sat_with(&xi, &sim, &f("c"), &opts).unwrap();
        assert_eq!(prefix_shape(&flat), "EEEAAEEAA");
        assert_eq!(
            flat.trace_vars(),
            ["p", "p1", "p5", "p2", "p6", "p3", "p7", "p4", "p8"]
        );
        assert_eq!(plain.matrix, flat.matrix);
        flat.validate(&[]).unwrap();
    }

    // -- semantic agreement with the world-level evaluators ------------------
    //
    // The emitted matrix is evaluated as a genuine trace formula: assign
    // pool traces to the trace variables, fuse the assignment into one
    // trace over indexed propositions, and run the LTL evaluator.  Over a
    // pool whose universe formula enumerates exactly the universe worlds,
    // this must agree with the world-level operator evaluators.

    fn fused_eval(matrix: &Formula, assignment: &BTreeMap<String, &LassoTrace>) -> bool {
        let traces: Vec<&LassoTrace> = assignment.values().copied().collect();
        let (p, l, unrolled) = align_lassos(&traces).unwrap();
        let alphabet: BTreeSet<String> = assignment
            .keys()
            .flat_map(|v| {
                traces[0]
                    .alphabet()
                    .iter()
                    .map(move |a| format!("{a}_{v}"))
            })
            .collect();
        let letters: Vec<trace::Letter> = (0..p + l)
            .map(|i| {
                assignment
                    .keys()
                    .zip(&unrolled)
                    .flat_map(|(v, letters)| letters[i].iter().map(move |a| format!("{a}_{v}")))
                    .collect()
            })
            .collect();
        let fused =
            LassoTrace::new(letters[..p].to_vec(), letters[p..].to_vec(), alphabet).unwrap();
        eval_ltl_at(&fused, matrix, 0).unwrap()
    }

    fn eval_hyper<'a>(
        h: &HyperFormula,
        pool: &'a [LassoTrace],
        reference: &str,
        ref_trace: &'a LassoTrace,
    ) -> bool {
        fn go<'a>(
            items: &[PrefixItem],
            matrix: &Formula,
            pool: &'a [LassoTrace],
            assignment: &mut BTreeMap<String, &'a LassoTrace>,
        ) -> bool {
            let Some((item, rest)) = items.split_first() else {
                return fused_eval(matrix, assignment);
            };
            let PrefixItem::Trace(q, name) = item else {
                unreachable!("conditional emissions bind no propositions");
            };
            let mut outcomes = pool.iter().map(|t| {
                assignment.insert(name.clone(), t);
                let v = go(rest, matrix, pool, assignment);
                assignment.remove(name);
                v
            });
            match q {
                Quant::Exists => outcomes.any(|v| v),
                Quant::Forall => outcomes.all(|v| v),
            }
        }
        let mut assignment = BTreeMap::new();
        assignment.insert(reference.to_string(), ref_trace);
        go(&h.prefix, &h.matrix, pool, &mut assignment)
    }

    /// Pool of single-position worlds (one letter, then empty forever) with
    /// the change-subset order over {x, y} anchored at world `reference`;
    /// the universe is given by the world indices.
    fn letter_pool(
        letters: &[&[&str]],
        universe: &[usize],
        reference: usize,
    ) -> (EvaluationContext, Vec<LassoTrace>, Formula) {
        let alphabet: BTreeSet<String> = ["x", "y"].map(String::from).into();
        let traces: Vec<LassoTrace> = letters
            .iter()
            .map(|ps| {
                let letter: trace::Letter = ps.iter().map(|p| p.to_string()).collect();
                LassoTrace::new(vec![letter], vec![trace::Letter::new()], alphabet.clone())
                    .unwrap()
            })
            .collect();
        let masks: Vec<WorldSet> = letters
            .iter()
            .map(|ps| {
                // Difference mask relative to the reference letter.
                WorldSet::from_indices(
                    2,
                    [("x", 0), ("y", 1)].iter().filter_map(|&(p, bit)| {
                        let here = ps.contains(&p);
                        let there = letters[reference].contains(&p);
                        (here != there).then_some(bit)
                    }),
                )
            })
            .collect();
        let order = Preorder::from_difference_masks(&masks, reference).unwrap();
        let mut members = WorldSet::empty(letters.len());
        for &i in universe {
            members.insert(i);
        }
        let worlds = traces
            .iter()
            .enumerate()
            .map(|(i, t)| ContextWorld { name: format!("w{i}"), trace: t.clone() })
            .collect();
        let ctx = EvaluationContext::new(worlds, members, order).unwrap();
        let universe_formula =
            Formula::big_or(universe.iter().map(|&i| lasso_formula(&traces[i])));
        (ctx, traces, universe_formula)
    }

    #[test]
    fn emissions_agree_with_the_world_level_evaluators() {
        let pools: &[(&[&[&str]], &[usize])] = &[
            (&[&[], &["x"], &["x", "y"]], &[0, 1, 2]),
            (&[&[], &["x"], &["x", "y"]], &[0, 1]),
            (&[&[], &["x"], &["y"]], &[0, 1, 2]),
            (&[&[], &["x"], &["y"]], &[0, 2]),
        ];
        let antecedents = ["x", "!x", "x | y", "x & y"];
        let consequents = ["y", "!y", "x <-> y"];
        let sim = SimilaritySpec::subset(["x", "y"]);
        let (mut holds, mut fails) = (0usize, 0usize);
        for (letters, universe) in pools {
            let (ctx, traces, universe_formula) = letter_pool(letters, universe, 0);
            let reference = &traces[0];
            for phi_text in antecedents {
                for psi_text in consequents {
                    let phi = f(phi_text);
                    let psi = f(psi_text);
                    for op in CfOp::ALL {
                        let world_route = match op {
                            CfOp::Would => cf::would(&ctx, &phi, &psi),
                            CfOp::Might => cf::might(&ctx, &phi, &psi),
                            CfOp::UWould => cf::uwould(&ctx, &phi, &psi),
                            CfOp::EMight => cf::emight(&ctx, &phi, &psi),
                            CfOp::WouldMin => cf::minimal_fo_would(&ctx, &phi, &psi),
                            CfOp::MightMin => cf::minimal_fo_might(&ctx, &phi, &psi),
                            CfOp::UWouldMin => cf::minimal_fo_uwould(&ctx, &phi, &psi),
                            CfOp::EMightMin => cf::minimal_fo_emight(&ctx, &phi, &psi),
                        }
                        .unwrap()
                        .value;
                        let h = emit_fo_counterfactual(
                            op, &phi, &psi, &sim, &universe_formula, "p",
                        )
                        .unwrap();
                        let trace_route = eval_hyper(&h, &traces, "p", reference);
                        assert_eq!(
                            trace_route,
                            world_route,
                            "{phi_text} {} {psi_text} over {letters:?} universe {universe:?}",
                            op.keyword()
                        );
                        if world_route {
                            holds += 1;
                        } else {
                            fails += 1;
                        }
                    }
                }
            }
        }
        // The comparison must exercise both verdicts.
        assert!(holds > 50 && fails > 50, "holds={holds} fails={fails}");
    }

    #[test]
    fn sat_emission_evaluates_like_the_top_level_verdict() {
        let letters: &[&[&str]] = &[&[], &["x"], &["y"]];
        let sim = SimilaritySpec::subset(["x", "y"]);
        let xi = parse_formula("(x mightmin x) & !(x would y) & !y").unwrap();
        // The leading `exists p` ranges over reference traces; each choice
        // re-anchors the similarity order, so the world-level comparison
        // rebuilds the context per candidate reference.
        let mut any_holds = false;
        for i in 0..letters.len() {
            let (ctx, traces, universe_formula) = letter_pool(letters, &[0, 1, 2], i);
            let h = emit_sat(&xi, &sim, &universe_formula).unwrap();
            let mut stripped = h.clone();
            stripped.prefix.remove(0);
            let trace_route = eval_hyper(&stripped, &traces, "p", &traces[i]);
            let world_route = cf::eval_top(&ctx, &xi, &format!("w{i}")).unwrap().value;
            assert_eq!(trace_route, world_route, "reference w{i}");
            any_holds |= world_route;
        }
        assert!(any_holds);
    }
}
