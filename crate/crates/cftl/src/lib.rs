//! Evaluation and encoding of temporal counterfactual conditionals.
//!
//! This crate implements a propositional temporal logic (QPTL: LTL plus
//! quantification over atomic propositions) extended with eight counterfactual
//! conditionals (`would`, `might`, `uwould`, `emight` and their `*min`
//! variants) interpreted over a universe of worlds ordered by a similarity
//! preorder with the reference world as unique minimum.  Worlds are either
//! explicit valuations or lasso traces (`prefix · loop^ω`).
//!
//! The main entry points are:
//!
//! - [`formula`]: ASTs, parser and printer for formulas and top-level
//!   counterfactual combinations.
//! - [`context`]: finite evaluation contexts (worlds, universe membership,
//!   similarity preorder).
//! - [`cf`]: the counterfactual operator evaluators, including both the
//!   second-order minimality check and its first-order equivalents.
//! - [`universe`]: bounded construction of trace universes from an LTL
//!   universe formula and a reference lasso.
//! - [`causality`]: binary structural-equation models, brute-force actual
//!   causes, prime implicants, and the reduction of actual causality to a
//!   minimal `might` counterfactual.
//! - [`hyper`]: emission of the counterfactual semantics as prenex HyperQPTL
//!   text for external model checkers.

pub mod causality;
pub mod cf;
pub mod context;
pub mod error;
pub mod formula;
pub mod gen;
pub mod hyper;
pub mod ltl;
pub mod order;
pub mod trace;
pub mod universe;
pub mod worldset;

pub use error::{CftlError, Result};
