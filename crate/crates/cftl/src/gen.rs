//! Seeded random model generation and the randomized law suites.
//!
//! Everything here is deterministic in the seed, so the same suites back
//! both the test harness and the `oracle` CLI subcommand, and failures can
//! be replayed.  The suites check the operator laws that hold for every
//! context — the would/might and uwould/emight dualities, the collapse of
//! the universal/existential variants on total orders, and the agreement of
//! the first-order minimality formulas with the second-order enumeration.

use std::collections::BTreeMap;

use crate::causality::{check_cause_encoding, Sem};
use crate::cf::{
    emight_sets, might_sets, minimal_fo_sets, minimal_so_sets, uwould_sets, would_sets,
};
use crate::formula::{CfOp, Formula};
use crate::order::{closure_preorder, Preorder};
use crate::worldset::WorldSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The deterministic generator used throughout the suites.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random preorder over `n ≥ 2` worlds with world 0 as unique-minimum
/// reference.  Generator edges never point at the reference, so the closure
/// cannot pull another world below it.
pub fn random_preorder(rng: &mut ChaCha8Rng, n: usize) -> Preorder {
    assert!(n >= 2);
    let edges = rng.gen_range(0..=2 * n);
    let generators: Vec<(usize, usize)> = (0..edges)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(1..n)))
        .collect();
    closure_preorder(&generators, n, 0).expect("reference stays minimal by construction")
}

/// Random total chain over `n ≥ 2` worlds starting at the reference 0.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> Preorder {
    assert!(n >= 2);
    let mut rest: Vec<usize> = (1..n).collect();
    rest.shuffle(rng);
    let mut generators = Vec::with_capacity(n - 1);
    let mut prev = 0;
    for &w in &rest {
        generators.push((prev, w));
        prev = w;
    }
    closure_preorder(&generators, n, 0).expect("chains keep the reference minimal")
}

/// Uniformly random subset of `0..n`.
pub fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> WorldSet {
    WorldSet::from_indices(n, (0..n).filter(|_| rng.gen_bool(0.5)))
}

fn all_subsets(n: usize) -> impl Iterator<Item = WorldSet> {
    (0u64..1 << n).map(move |mask| {
        WorldSet::from_indices(n, (0..n).filter(move |i| mask >> i & 1 == 1))
    })
}

/// Result of one randomized suite run.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub label: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn describe(order: &Preorder, phi: &WorldSet, psi: &WorldSet) -> String {
    let n = order.len();
    let mut rel = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && order.leq(i, j) {
                rel.push(format!("{i}<={j}"));
            }
        }
    }
    format!("n={n} order[{}] phi={phi:?} psi={psi:?}", rel.join(","))
}

/// Checks `would(φ,ψ) = ¬might(φ,¬ψ)` and `uwould(φ,ψ) = ¬emight(φ,¬ψ)` on
/// randomized contexts (complement taken within the universe).
pub fn run_duality_suite(seed: u64, contexts: usize) -> SuiteOutcome {
    let mut rng = rng(seed);
    let mut cases = 0;
    let mut failures = 0;
    let mut first_failure = None;
    for _ in 0..contexts {
        let n = rng.gen_range(2..=8);
        let order = random_preorder(&mut rng, n);
        let universe = WorldSet::full(n);
        for _ in 0..20 {
            let phi = random_subset(&mut rng, n);
            let psi = random_subset(&mut rng, n);
            let npsi = universe.difference(&psi);
            cases += 1;
            let lewis = would_sets(&order, &universe, &phi, &psi).0
                == !might_sets(&order, &universe, &phi, &npsi).0;
            let universal = uwould_sets(&order, &universe, &phi, &psi).0
                == !emight_sets(&order, &universe, &phi, &npsi).0;
            if !(lewis && universal) {
                failures += 1;
                first_failure
                    .get_or_insert_with(|| format!("duality: {}", describe(&order, &phi, &psi)));
            }
        }
    }
    SuiteOutcome { label: "duality", cases, failures, first_failure }
}

/// Checks `would = uwould` and `might = emight` on random total chains,
/// exhaustively over all extension pairs.
pub fn run_collapse_suite(seed: u64, contexts: usize) -> SuiteOutcome {
    let mut rng = rng(seed);
    let mut cases = 0;
    let mut failures = 0;
    let mut first_failure = None;
    for _ in 0..contexts {
        let n = rng.gen_range(2..=6);
        let order = random_chain(&mut rng, n);
        debug_assert!(order.is_total());
        let universe = WorldSet::full(n);
        for phi in all_subsets(n) {
            for psi in all_subsets(n) {
                cases += 1;
                let w = would_sets(&order, &universe, &phi, &psi).0
                    == uwould_sets(&order, &universe, &phi, &psi).0;
                let m = might_sets(&order, &universe, &phi, &psi).0
                    == emight_sets(&order, &universe, &phi, &psi).0;
                if !(w && m) {
                    failures += 1;
                    first_failure.get_or_insert_with(|| {
                        format!("collapse: {}", describe(&order, &phi, &psi))
                    });
                }
            }
        }
    }
    SuiteOutcome { label: "total-order collapse", cases, failures, first_failure }
}

/// Checks that each first-order minimal conditional equals the second-order
/// subset enumeration, exhaustively over all extension pairs of random
/// preorders with ambient = universe.
pub fn run_fo_so_suite(seed: u64, preorders: usize) -> SuiteOutcome {
    let mut rng = rng(seed);
    let mut cases = 0;
    let mut failures = 0;
    let mut first_failure = None;
    for _ in 0..preorders {
        let n = rng.gen_range(2..=5);
        let order = random_preorder(&mut rng, n);
        let universe = WorldSet::full(n);
        for phi in all_subsets(n) {
            for psi in all_subsets(n) {
                for op in [CfOp::WouldMin, CfOp::MightMin, CfOp::UWouldMin, CfOp::EMightMin] {
                    cases += 1;
                    let so = minimal_so_sets(op, &order, &universe, &phi, &psi, 14)
                        .expect("within enumeration cap")
                        .0;
                    let fo = minimal_fo_sets(op, &order, &universe, &phi, &psi).0;
                    if so != fo {
                        failures += 1;
                        first_failure.get_or_insert_with(|| {
                            format!(
                                "{} fo={fo} so={so}: {}",
                                op.keyword(),
                                describe(&order, &phi, &psi)
                            )
                        });
                    }
                }
            }
        }
    }
    SuiteOutcome { label: "first-order vs second-order minimality", cases, failures, first_failure }
}

/// Random propositional formula over the given atom pool.
fn random_prop(rng: &mut ChaCha8Rng, pool: &[String], depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        let atom = Formula::atom(pool[rng.gen_range(0..pool.len())].as_str());
        return if rng.gen_bool(0.4) { Formula::not(atom) } else { atom };
    }
    let a = random_prop(rng, pool, depth - 1);
    let b = random_prop(rng, pool, depth - 1);
    match rng.gen_range(0..4) {
        0 => Formula::and(a, b),
        1 => Formula::or(a, b),
        2 => Formula::implies(a, b),
        _ => Formula::not(a),
    }
}

/// Random acyclic binary structural-equation model with `n ≥ 1` endogenous
/// variables `v0..`, each depending on earlier variables and its own
/// exogenous input `e{i}` under a random context.
pub fn random_sem(rng: &mut ChaCha8Rng, n: usize) -> Sem {
    assert!(n >= 1);
    let mut declarations = Vec::with_capacity(n);
    let mut context = BTreeMap::new();
    for i in 0..n {
        let mut pool: Vec<String> = (0..i).map(|j| format!("v{j}")).collect();
        pool.push(format!("e{i}"));
        context.insert(format!("e{i}"), rng.gen_bool(0.5));
        declarations.push((format!("v{i}"), random_prop(rng, &pool, 2)));
    }
    Sem::new(declarations, context).expect("generated models are acyclic by construction")
}

/// Random propositional effect over the model's endogenous variables.
pub fn random_effect(rng: &mut ChaCha8Rng, m: &Sem) -> Formula {
    random_prop(rng, m.variables(), 2)
}

fn describe_sem(m: &Sem, effect: &Formula) -> String {
    let mut out = String::new();
    for x in m.variables() {
        out.push_str(&format!("var {x} := {}; ", m.equation(x).expect("declared")));
    }
    out.push_str("context");
    for (e, v) in m.context() {
        out.push_str(&format!(" {e}={}", u8::from(*v)));
    }
    out.push_str(&format!("; effect {effect}"));
    out
}

/// Checks that brute-force actual causes and the counterfactual encoding on
/// the intervention universe agree, over random models and random effects.
pub fn run_cause_encoding_suite(seed: u64, models: usize) -> SuiteOutcome {
    let mut rng = rng(seed);
    let mut cases = 0;
    let mut failures = 0;
    let mut first_failure = None;
    for _ in 0..models {
        let n = rng.gen_range(1..=4);
        let m = random_sem(&mut rng, n);
        let effect = random_effect(&mut rng, &m);
        cases += 1;
        match check_cause_encoding(&m, &effect) {
            Ok(report) if report.agree => {}
            Ok(report) => {
                failures += 1;
                first_failure.get_or_insert_with(|| {
                    format!(
                        "causes={:?} closest={} literal={} blake={}: {}",
                        report.causes.iter().map(ToString::to_string).collect::<Vec<_>>(),
                        report.closest_worlds_match,
                        report.might_minimal_verdict,
                        report.blake_form_ok,
                        describe_sem(&m, &effect)
                    )
                });
            }
            Err(e) => {
                failures += 1;
                first_failure.get_or_insert_with(|| format!("error {e}: {}", describe_sem(&m, &effect)));
            }
        }
    }
    SuiteOutcome { label: "actual causes vs counterfactual encoding", cases, failures, first_failure }
}
