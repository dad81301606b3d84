//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by parsing, model construction, and evaluation.
#[derive(Debug, Error)]
pub enum CftlError {
    /// Concrete-syntax error with source position (1-based line and column).
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    /// A counterfactual operator appeared where only a plain temporal formula
    /// is allowed (counterfactuals cannot nest).
    #[error("counterfactual nesting violation: {0}")]
    Nesting(String),

    /// A propositional quantifier shadows an enclosing binder or reuses a name
    /// that also occurs free.
    #[error("propositional quantifier error: {0}")]
    Quantifier(String),

    /// A world id was referenced that is not part of the ambient set.
    #[error("unknown world id `{0}`")]
    UnknownWorld(String),

    /// The similarity preorder does not have the reference world as its unique
    /// minimum.
    #[error("reference world is not the unique minimum: {0}")]
    MinimumViolated(String),

    /// Traces handed to an operation do not share an alphabet.
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    /// An enumeration or search exceeded its configured cap.  Caps are hard
    /// errors, never silent truncation.
    #[error("cap exceeded: {0}")]
    CapExceeded(String),

    /// A structural-equation model is ill-formed (cyclic, unknown variable,
    /// missing context value, non-Boolean equation).
    #[error("invalid model: {0}")]
    Model(String),

    /// Malformed input file or argument.
    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CftlError>;
