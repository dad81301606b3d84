//! Evaluation contexts: a finite set of ambient worlds (each a lasso trace),
//! a universe of admissible worlds inside it, and a similarity preorder whose
//! reference world the counterfactuals are judged from.
//!
//! Worlds of an explicit-universe file are abstract points with extensional
//! properties; they are represented as constant one-letter lassos whose
//! letter collects the properties holding there, so the same QPTL evaluator
//! serves both abstract and trace-shaped contexts.

use crate::error::{CftlError, Result};
use crate::formula::Formula;
use crate::ltl::{eval_qptl_bounded, EvalBounds, QptlOutcome};
use crate::order::{closure_preorder, Preorder};
use crate::trace::{LassoTrace, Letter};
use crate::worldset::WorldSet;
use std::collections::BTreeMap;
use std::collections::BTreeSet;

/// One ambient world: a stable name plus the trace it denotes.
#[derive(Debug, Clone)]
pub struct ContextWorld {
    pub name: String,
    pub trace: LassoTrace,
}

/// Finite model the counterfactual operators are evaluated over.
#[derive(Debug, Clone)]
pub struct EvaluationContext {
    worlds: Vec<ContextWorld>,
    universe: WorldSet,
    order: Preorder,
    bounds: EvalBounds,
}

impl EvaluationContext {
    /// Checks the structural invariants: matching sizes, unique names, and
    /// the preorder's reference inside the universe.
    pub fn new(
        worlds: Vec<ContextWorld>,
        universe: WorldSet,
        order: Preorder,
    ) -> Result<EvaluationContext> {
        if order.len() != worlds.len() || universe.domain_size() != worlds.len() {
            return Err(CftlError::Model(format!(
                "context sizes disagree: {} worlds, universe over {}, order over {}",
                worlds.len(),
                universe.domain_size(),
                order.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for w in &worlds {
            if !seen.insert(&w.name) {
                return Err(CftlError::Model(format!("duplicate world id '{}'", w.name)));
            }
        }
        if !universe.contains(order.reference()) {
            return Err(CftlError::Model(
                "the reference world must be a universe member".into(),
            ));
        }
        Ok(EvaluationContext { worlds, universe, order, bounds: EvalBounds::default() })
    }

    /// Builds a context of abstract worlds from extensional properties: each
    /// world becomes a constant lasso over the property alphabet.
    pub fn extensional(
        names: Vec<String>,
        extensions: &BTreeMap<String, BTreeSet<usize>>,
        universe: WorldSet,
        order: Preorder,
    ) -> Result<EvaluationContext> {
        let alphabet: BTreeSet<String> = extensions.keys().cloned().collect();
        let worlds = names
            .into_iter()
            .enumerate()
            .map(|(i, name)| {
                let letter: Letter = extensions
                    .iter()
                    .filter(|(_, ws)| ws.contains(&i))
                    .map(|(p, _)| p.clone())
                    .collect();
                Ok(ContextWorld { name, trace: LassoTrace::constant(letter, alphabet.clone())? })
            })
            .collect::<Result<Vec<_>>>()?;
        EvaluationContext::new(worlds, universe, order)
    }

    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }

    pub fn worlds(&self) -> &[ContextWorld] {
        &self.worlds
    }

    pub fn world(&self, i: usize) -> &ContextWorld {
        &self.worlds[i]
    }

    pub fn universe(&self) -> &WorldSet {
        &self.universe
    }

    pub fn order(&self) -> &Preorder {
        &self.order
    }

    pub fn reference(&self) -> usize {
        self.order.reference()
    }

    pub fn world_index(&self, name: &str) -> Result<usize> {
        self.worlds
            .iter()
            .position(|w| w.name == name)
            .ok_or_else(|| CftlError::UnknownWorld(name.to_string()))
    }

    /// Whether world `w` satisfies `f` (bounded QPTL at position 0).
    pub fn satisfies(&self, w: usize, f: &Formula) -> Result<QptlOutcome> {
        eval_qptl_bounded(&self.worlds[w].trace, f, &self.bounds)
    }

    /// Extension of `f` over all ambient worlds, with a flag telling whether
    /// any membership was decided at a quantifier bound.
    pub fn ambient_extension(&self, f: &Formula) -> Result<(WorldSet, bool)> {
        let mut ext = WorldSet::empty(self.len());
        let mut bounded = false;
        for i in 0..self.len() {
            let out = self.satisfies(i, f)?;
            bounded |= out.bounded;
            if out.value {
                ext.insert(i);
            }
        }
        Ok((ext, bounded))
    }

    /// Extension of `f` restricted to the universe.
    pub fn universe_extension(&self, f: &Formula) -> Result<(WorldSet, bool)> {
        let (ext, bounded) = self.ambient_extension(f)?;
        Ok((ext.intersection(&self.universe), bounded))
    }
}

/// Parses an explicit-universe file (sections `worlds:`, `universe:`,
/// `ref:`, `prop <name>: <ids>`, `order: w1<=w2 ...`).  `ref_override`
/// replaces the file's reference world before the preorder is closed, so the
/// override must again be a unique minimum.
pub fn parse_cfu(text: &str, ref_override: Option<&str>) -> Result<EvaluationContext> {
    let mut world_names: Vec<String> = Vec::new();
    let mut universe_names: Option<Vec<String>> = None;
    let mut ref_name: Option<String> = None;
    let mut props: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut generator_names: Vec<(String, String)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, rest) = line.split_once(':').ok_or_else(|| {
            CftlError::Input(format!("line {}: expected 'section: ...'", lineno + 1))
        })?;
        let head = head.trim();
        let rest = rest.trim();
        match head {
            "worlds" => world_names.extend(rest.split_whitespace().map(str::to_string)),
            "universe" => {
                universe_names
                    .get_or_insert_with(Vec::new)
                    .extend(rest.split_whitespace().map(str::to_string));
            }
            "ref" => {
                if ref_name.is_some() {
                    return Err(CftlError::Input(format!("line {}: duplicate ref", lineno + 1)));
                }
                ref_name = Some(rest.to_string());
            }
            "order" => {
                for pair in rest.split_whitespace() {
                    let (a, b) = pair.split_once("<=").ok_or_else(|| {
                        CftlError::Input(format!(
                            "line {}: order entries look like w1<=w2, got '{pair}'",
                            lineno + 1
                        ))
                    })?;
                    generator_names.push((a.to_string(), b.to_string()));
                }
            }
            _ => match head.strip_prefix("prop ") {
                Some(p) => {
                    props
                        .entry(p.trim().to_string())
                        .or_default()
                        .extend(rest.split_whitespace().map(str::to_string));
                }
                None => {
                    return Err(CftlError::Input(format!(
                        "line {}: unknown section '{head}'",
                        lineno + 1
                    )))
                }
            },
        }
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in world_names.iter().enumerate() {
        if index.insert(name, i).is_some() {
            return Err(CftlError::Model(format!("duplicate world id '{name}'")));
        }
    }
    let resolve = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| CftlError::UnknownWorld(name.to_string()))
    };

    let n = world_names.len();
    let ref_name = match ref_override {
        Some(r) => r.to_string(),
        None => ref_name.ok_or_else(|| CftlError::Input("missing 'ref:' section".into()))?,
    };
    let reference = resolve(&ref_name)?;

    let mut universe = WorldSet::empty(n);
    match &universe_names {
        Some(names) => {
            for name in names {
                universe.insert(resolve(name)?);
            }
        }
        None => universe = WorldSet::full(n),
    }

    let mut extensions: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (p, members) in &props {
        let set = members.iter().map(|m| resolve(m)).collect::<Result<BTreeSet<_>>>()?;
        extensions.insert(p.clone(), set);
    }

    let generators = generator_names
        .iter()
        .map(|(a, b)| Ok((resolve(a)?, resolve(b)?)))
        .collect::<Result<Vec<_>>>()?;
    let order = closure_preorder(&generators, n, reference)?;

    EvaluationContext::extensional(world_names, &extensions, universe, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_plain;

    const CHAIN: &str = "\
# three worlds on a chain
worlds: r a b
universe: r a b
ref: r
prop A: a b
prop B: b
order: a<=b
";

    #[test]
    fn parses_explicit_universe_files() {
        let ctx = parse_cfu(CHAIN, None).unwrap();
        assert_eq!(ctx.len(), 3);
        assert_eq!(ctx.world(0).name, "r");
        assert_eq!(ctx.reference(), 0);
        assert!(ctx.order().leq(0, 1) && ctx.order().leq(1, 2) && !ctx.order().leq(2, 1));
        let (ext, bounded) = ctx.universe_extension(&parse_plain("A").unwrap()).unwrap();
        assert_eq!(ext.iter().collect::<Vec<_>>(), vec![1, 2]);
        assert!(!bounded);
        let (ext, _) = ctx.universe_extension(&parse_plain("A & !B").unwrap()).unwrap();
        assert_eq!(ext.iter().collect::<Vec<_>>(), vec![1]);
        // Temporal operators degenerate on constant worlds.
        let (ext, _) = ctx.universe_extension(&parse_plain("G A").unwrap()).unwrap();
        assert_eq!(ext.iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn ref_override_recloses_the_order() {
        let ctx = parse_cfu(CHAIN, Some("a")).unwrap();
        assert_eq!(ctx.reference(), 1);
        assert!(ctx.order().leq(1, 0) && ctx.order().leq(1, 2));
        assert!(!ctx.order().leq(0, 1));
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(matches!(
            parse_cfu("worlds: r a\nref: zz\n", None),
            Err(CftlError::UnknownWorld(_))
        ));
        assert!(matches!(
            parse_cfu("worlds: r a\n", None),
            Err(CftlError::Input(_))
        ));
        assert!(matches!(
            parse_cfu("worlds: r r\nref: r\n", None),
            Err(CftlError::Model(_))
        ));
        assert!(matches!(
            parse_cfu("worlds: r a\nref: r\nuniverse: a\n", None),
            Err(CftlError::Model(_))
        ));
        assert!(matches!(
            parse_cfu("worlds: r a\nref: r\norder: a<b\n", None),
            Err(CftlError::Input(_))
        ));
        assert!(matches!(
            parse_cfu("worlds: r a\nref: r\nbogus: x\n", None),
            Err(CftlError::Input(_))
        ));
    }
}
