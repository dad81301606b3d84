//! Formula ASTs, concrete syntax, and pretty-printing.
//!
//! Two layers: [`Formula`] is QPTL (LTL plus propositional quantifiers), and
//! [`CfFormula`] adds the eight counterfactual conditionals on top.
//! Conditionals cannot nest: their antecedent and consequent are plain
//! [`Formula`]s, and the only connectives above them are conjunction and
//! negation (`|` and `->` over conditionals desugar into those two).
//!
//! The grammar, precedence table, and file formats are documented in
//! `docs/grammar.md` at the repository root.

use crate::error::{CftlError, Result};
use std::collections::BTreeSet;
use std::fmt;

/// QPTL formula: LTL over named propositions plus `exists q.` / `forall q.`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Finally(Box<Formula>),
    Globally(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
    Forall(String, Box<Formula>),
}

/// The eight counterfactual conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CfOp {
    Would,
    Might,
    UWould,
    EMight,
    WouldMin,
    MightMin,
    UWouldMin,
    EMightMin,
}

impl CfOp {
    pub const ALL: [CfOp; 8] = [
        CfOp::Would,
        CfOp::Might,
        CfOp::UWould,
        CfOp::EMight,
        CfOp::WouldMin,
        CfOp::MightMin,
        CfOp::UWouldMin,
        CfOp::EMightMin,
    ];

    /// The surface keyword for this conditional.
    pub fn keyword(self) -> &'static str {
        match self {
            CfOp::Would => "would",
            CfOp::Might => "might",
            CfOp::UWould => "uwould",
            CfOp::EMight => "emight",
            CfOp::WouldMin => "wouldmin",
            CfOp::MightMin => "mightmin",
            CfOp::UWouldMin => "uwouldmin",
            CfOp::EMightMin => "emightmin",
        }
    }

    fn from_keyword(s: &str) -> Option<CfOp> {
        CfOp::ALL.iter().copied().find(|op| op.keyword() == s)
    }

    /// The non-minimal conditional underlying this one (identity for the
    /// first four).
    pub fn base(self) -> CfOp {
        match self {
            CfOp::WouldMin => CfOp::Would,
            CfOp::MightMin => CfOp::Might,
            CfOp::UWouldMin => CfOp::UWould,
            CfOp::EMightMin => CfOp::EMight,
            op => op,
        }
    }

    /// Whether this is one of the four minimal conditionals.
    pub fn is_minimal(self) -> bool {
        self != self.base()
    }
}

/// Top-level formula: Boolean combination of plain QPTL formulas and
/// counterfactual conditionals.
///
/// Parser-canonical shapes only: `CfNot` appears only above a subtree that
/// contains a conditional, and `CfAnd` has at least one conditional-bearing
/// child (a conjunction of two plain formulas is a `Plain` of `Formula::And`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CfFormula {
    Plain(Formula),
    Cf(CfOp, Formula, Formula),
    CfNot(Box<CfFormula>),
    CfAnd(Box<CfFormula>, Box<CfFormula>),
}

impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(name.to_string())
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Formula {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Formula {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Formula {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn iff(l: Formula, r: Formula) -> Formula {
        Formula::Iff(Box::new(l), Box::new(r))
    }

    pub fn next(f: Formula) -> Formula {
        Formula::Next(Box::new(f))
    }

    pub fn finally(f: Formula) -> Formula {
        Formula::Finally(Box::new(f))
    }

    pub fn globally(f: Formula) -> Formula {
        Formula::Globally(Box::new(f))
    }

    pub fn until(l: Formula, r: Formula) -> Formula {
        Formula::Until(Box::new(l), Box::new(r))
    }

    /// `X^k f`.
    pub fn xnext(k: usize, f: Formula) -> Formula {
        (0..k).fold(f, |acc, _| Formula::next(acc))
    }

    /// Left-folded conjunction; `true` when empty.
    pub fn big_and(fs: impl IntoIterator<Item = Formula>) -> Formula {
        let mut it = fs.into_iter();
        match it.next() {
            None => Formula::True,
            Some(first) => it.fold(first, Formula::and),
        }
    }

    /// Left-folded disjunction; `false` when empty.
    pub fn big_or(fs: impl IntoIterator<Item = Formula>) -> Formula {
        let mut it = fs.into_iter();
        match it.next() {
            None => Formula::False,
            Some(first) => it.fold(first, Formula::or),
        }
    }

    /// Free atomic propositions (names bound by an enclosing quantifier are
    /// excluded).
    pub fn free_atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        self.free_atoms_into(&mut bound, &mut out);
        out
    }

    fn free_atoms_into(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                if !bound.iter().any(|b| b == a) {
                    out.insert(a.clone());
                }
            }
            Formula::Not(f) | Formula::Next(f) | Formula::Finally(f) | Formula::Globally(f) => {
                f.free_atoms_into(bound, out)
            }
            Formula::And(l, r)
            | Formula::Or(l, r)
            | Formula::Implies(l, r)
            | Formula::Iff(l, r)
            | Formula::Until(l, r)
            | Formula::Release(l, r) => {
                l.free_atoms_into(bound, out);
                r.free_atoms_into(bound, out);
            }
            Formula::Exists(q, body) | Formula::Forall(q, body) => {
                bound.push(q.clone());
                body.free_atoms_into(bound, out);
                bound.pop();
            }
        }
    }

    /// Names bound by propositional quantifiers anywhere in the formula.
    pub fn binder_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.binder_names_into(&mut out);
        out
    }

    fn binder_names_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => {}
            Formula::Not(f) | Formula::Next(f) | Formula::Finally(f) | Formula::Globally(f) => {
                f.binder_names_into(out)
            }
            Formula::And(l, r)
            | Formula::Or(l, r)
            | Formula::Implies(l, r)
            | Formula::Iff(l, r)
            | Formula::Until(l, r)
            | Formula::Release(l, r) => {
                l.binder_names_into(out);
                r.binder_names_into(out);
            }
            Formula::Exists(q, body) | Formula::Forall(q, body) => {
                out.insert(q.clone());
                body.binder_names_into(out);
            }
        }
    }

    /// True if the formula contains no propositional quantifier.
    pub fn is_quantifier_free(&self) -> bool {
        self.binder_names().is_empty()
    }

    /// Renames every free atom through `f`; bound occurrences and binder
    /// names stay untouched.
    pub fn rename_free(&self, f: &dyn Fn(&str) -> String) -> Formula {
        fn go(node: &Formula, f: &dyn Fn(&str) -> String, bound: &mut Vec<String>) -> Formula {
            match node {
                Formula::True => Formula::True,
                Formula::False => Formula::False,
                Formula::Atom(a) => {
                    if bound.iter().any(|b| b == a) {
                        Formula::Atom(a.clone())
                    } else {
                        Formula::Atom(f(a))
                    }
                }
                Formula::Not(x) => Formula::not(go(x, f, bound)),
                Formula::Next(x) => Formula::next(go(x, f, bound)),
                Formula::Finally(x) => Formula::finally(go(x, f, bound)),
                Formula::Globally(x) => Formula::globally(go(x, f, bound)),
                Formula::And(l, r) => Formula::and(go(l, f, bound), go(r, f, bound)),
                Formula::Or(l, r) => Formula::or(go(l, f, bound), go(r, f, bound)),
                Formula::Implies(l, r) => Formula::implies(go(l, f, bound), go(r, f, bound)),
                Formula::Iff(l, r) => Formula::iff(go(l, f, bound), go(r, f, bound)),
                Formula::Until(l, r) => Formula::until(go(l, f, bound), go(r, f, bound)),
                Formula::Release(l, r) => {
                    Formula::Release(Box::new(go(l, f, bound)), Box::new(go(r, f, bound)))
                }
                Formula::Exists(q, body) => {
                    bound.push(q.clone());
                    let b = go(body, f, bound);
                    bound.pop();
                    Formula::Exists(q.clone(), Box::new(b))
                }
                Formula::Forall(q, body) => {
                    bound.push(q.clone());
                    let b = go(body, f, bound);
                    bound.pop();
                    Formula::Forall(q.clone(), Box::new(b))
                }
            }
        }
        go(self, f, &mut Vec::new())
    }

    // Precedence levels, loosest to tightest: 0 quantifiers, 1 <->, 2 ->,
    // 3 |, 4 &, 5 U/R, 6 unary, 7 atoms and constants.
    fn prec(&self) -> u8 {
        match self {
            Formula::Exists(..) | Formula::Forall(..) => 0,
            Formula::Iff(..) => 1,
            Formula::Implies(..) => 2,
            Formula::Or(..) => 3,
            Formula::And(..) => 4,
            Formula::Until(..) | Formula::Release(..) => 5,
            Formula::Not(_) | Formula::Next(_) | Formula::Finally(_) | Formula::Globally(_) => 6,
            Formula::True | Formula::False | Formula::Atom(_) => 7,
        }
    }

    fn render_prec(&self, min: u8, out: &mut String) {
        let wrap = self.prec() < min;
        if wrap {
            out.push('(');
        }
        match self {
            Formula::True => out.push_str("true"),
            Formula::False => out.push_str("false"),
            Formula::Atom(a) => out.push_str(a),
            Formula::Not(f) => {
                out.push('!');
                f.render_prec(6, out);
            }
            Formula::Next(f) => {
                out.push_str("X ");
                f.render_prec(6, out);
            }
            Formula::Finally(f) => {
                out.push_str("F ");
                f.render_prec(6, out);
            }
            Formula::Globally(f) => {
                out.push_str("G ");
                f.render_prec(6, out);
            }
            Formula::Until(l, r) => {
                l.render_prec(6, out);
                out.push_str(" U ");
                r.render_prec(5, out);
            }
            Formula::Release(l, r) => {
                l.render_prec(6, out);
                out.push_str(" R ");
                r.render_prec(5, out);
            }
            Formula::And(l, r) => {
                l.render_prec(4, out);
                out.push_str(" & ");
                r.render_prec(5, out);
            }
            Formula::Or(l, r) => {
                l.render_prec(3, out);
                out.push_str(" | ");
                r.render_prec(4, out);
            }
            Formula::Implies(l, r) => {
                l.render_prec(3, out);
                out.push_str(" -> ");
                r.render_prec(2, out);
            }
            Formula::Iff(l, r) => {
                l.render_prec(1, out);
                out.push_str(" <-> ");
                r.render_prec(2, out);
            }
            Formula::Exists(q, body) => {
                out.push_str("exists ");
                out.push_str(q);
                out.push_str(". ");
                body.render_prec(0, out);
            }
            Formula::Forall(q, body) => {
                out.push_str("forall ");
                out.push_str(q);
                out.push_str(". ");
                body.render_prec(0, out);
            }
        }
        if wrap {
            out.push(')');
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.render_prec(0, &mut s);
        f.write_str(&s)
    }
}

impl CfFormula {
    pub fn cf(op: CfOp, antecedent: Formula, consequent: Formula) -> CfFormula {
        CfFormula::Cf(op, antecedent, consequent)
    }

    pub fn cf_not(x: CfFormula) -> CfFormula {
        CfFormula::CfNot(Box::new(x))
    }

    pub fn cf_and(l: CfFormula, r: CfFormula) -> CfFormula {
        CfFormula::CfAnd(Box::new(l), Box::new(r))
    }

    /// Disjunction desugared to `!(!l & !r)` at the conditional level.
    pub fn cf_or(l: CfFormula, r: CfFormula) -> CfFormula {
        CfFormula::cf_not(CfFormula::cf_and(CfFormula::cf_not(l), CfFormula::cf_not(r)))
    }

    pub fn free_atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        match self {
            CfFormula::Plain(f) => f.free_atoms_into(&mut bound, &mut out),
            CfFormula::Cf(_, a, c) => {
                a.free_atoms_into(&mut bound, &mut out);
                c.free_atoms_into(&mut bound, &mut out);
            }
            CfFormula::CfNot(x) => out = x.free_atoms(),
            CfFormula::CfAnd(l, r) => {
                out = l.free_atoms();
                out.extend(r.free_atoms());
            }
        }
        out
    }

    fn binder_names(&self) -> BTreeSet<String> {
        match self {
            CfFormula::Plain(f) => f.binder_names(),
            CfFormula::Cf(_, a, c) => {
                let mut out = a.binder_names();
                out.extend(c.binder_names());
                out
            }
            CfFormula::CfNot(x) => x.binder_names(),
            CfFormula::CfAnd(l, r) => {
                let mut out = l.binder_names();
                out.extend(r.binder_names());
                out
            }
        }
    }

    fn render_into(&self, out: &mut String) {
        match self {
            CfFormula::Plain(f) => f.render_prec(0, out),
            CfFormula::Cf(op, a, c) => {
                a.render_prec(0, out);
                out.push(' ');
                out.push_str(op.keyword());
                out.push(' ');
                c.render_prec(0, out);
            }
            CfFormula::CfNot(x) => {
                out.push_str("!(");
                x.render_into(out);
                out.push(')');
            }
            CfFormula::CfAnd(l, r) => {
                l.render_and_operand(false, out);
                out.push_str(" & ");
                r.render_and_operand(true, out);
            }
        }
    }

    // Conditionals always need parentheses as conjuncts ("a would b & c"
    // would pull the conjunction into the consequent); so does a CfAnd in
    // right position, to preserve the left-folded shape.
    fn render_and_operand(&self, is_right: bool, out: &mut String) {
        match self {
            CfFormula::Plain(f) => f.render_prec(4, out),
            CfFormula::Cf(..) => {
                out.push('(');
                self.render_into(out);
                out.push(')');
            }
            CfFormula::CfNot(_) => self.render_into(out),
            CfFormula::CfAnd(..) => {
                if is_right {
                    out.push('(');
                    self.render_into(out);
                    out.push(')');
                } else {
                    self.render_into(out);
                }
            }
        }
    }
}

impl fmt::Display for CfFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_formula(self))
    }
}

/// Renders a formula; the output re-parses to a structurally identical AST.
pub fn render_formula(f: &CfFormula) -> String {
    let mut out = String::new();
    f.render_into(&mut out);
    out
}

/// Free atomic propositions of a top-level formula.
pub fn free_atoms(f: &CfFormula) -> BTreeSet<String> {
    f.free_atoms()
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Dot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    DArrow,
    Next,
    Finally,
    Globally,
    Until,
    Release,
    True,
    False,
    Exists,
    Forall,
    CfKw(CfOp),
    Ident(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Bang => "'!'".into(),
            Tok::Amp => "'&'".into(),
            Tok::Pipe => "'|'".into(),
            Tok::Arrow => "'->'".into(),
            Tok::DArrow => "'<->'".into(),
            Tok::Next => "'X'".into(),
            Tok::Finally => "'F'".into(),
            Tok::Globally => "'G'".into(),
            Tok::Until => "'U'".into(),
            Tok::Release => "'R'".into(),
            Tok::True => "'true'".into(),
            Tok::False => "'false'".into(),
            Tok::Exists => "'exists'".into(),
            Tok::Forall => "'forall'".into(),
            Tok::CfKw(op) => format!("'{}'", op.keyword()),
            Tok::Ident(s) => format!("identifier '{s}'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                // Comment to end of line.
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' | ')' | '.' | '!' | '&' | '|' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '.' => Tok::Dot,
                    '!' => Tok::Bang,
                    '&' => Tok::Amp,
                    _ => Tok::Pipe,
                };
                out.push(Lexed { tok, line, col });
                chars.next();
                col += 1;
            }
            '-' => {
                chars.next();
                if chars.peek() == Some(&'>') {
                    chars.next();
                    out.push(Lexed { tok: Tok::Arrow, line, col });
                    col += 2;
                } else {
                    return Err(CftlError::Syntax {
                        line,
                        col,
                        msg: "expected '->' after '-'".into(),
                    });
                }
            }
            '<' => {
                chars.next();
                if chars.peek() == Some(&'-') {
                    chars.next();
                    if chars.peek() == Some(&'>') {
                        chars.next();
                        out.push(Lexed { tok: Tok::DArrow, line, col });
                        col += 3;
                    } else {
                        return Err(CftlError::Syntax {
                            line,
                            col,
                            msg: "expected '<->' after '<-'".into(),
                        });
                    }
                } else {
                    return Err(CftlError::Syntax {
                        line,
                        col,
                        msg: "expected '<->' after '<'".into(),
                    });
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start_col = col;
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                // A run of only X/F/G letters is a stack of unary temporal
                // operators ("XX top" means X X top); anything else is one
                // keyword or identifier.
                if ident.chars().all(|c| matches!(c, 'X' | 'F' | 'G')) {
                    for (i, c) in ident.chars().enumerate() {
                        let tok = match c {
                            'X' => Tok::Next,
                            'F' => Tok::Finally,
                            _ => Tok::Globally,
                        };
                        out.push(Lexed { tok, line, col: start_col + i });
                    }
                } else {
                    let tok = match ident.as_str() {
                        "U" => Tok::Until,
                        "R" => Tok::Release,
                        "true" => Tok::True,
                        "false" => Tok::False,
                        "exists" => Tok::Exists,
                        "forall" => Tok::Forall,
                        s => match CfOp::from_keyword(s) {
                            Some(op) => Tok::CfKw(op),
                            None => Tok::Ident(ident.clone()),
                        },
                    };
                    out.push(Lexed { tok, line, col: start_col });
                }
            }
            other => {
                return Err(CftlError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character '{other}'"),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

// Intermediate result flowing up the precedence chain: a connective stays at
// the plain-formula level until one of its operands contains a conditional,
// at which point the whole expression is upgraded to the CfFormula level.
enum UExpr {
    Pure(Formula),
    Cf(CfFormula),
}

impl UExpr {
    fn lift(self) -> CfFormula {
        match self {
            UExpr::Pure(f) => CfFormula::Plain(f),
            UExpr::Cf(c) => c,
        }
    }

    fn negate(self) -> CfFormula {
        match self {
            UExpr::Pure(f) => CfFormula::Plain(Formula::not(f)),
            UExpr::Cf(c) => CfFormula::cf_not(c),
        }
    }
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
    binders: Vec<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(l) => (l.line, l.col),
            None => self
                .toks
                .last()
                .map(|l| (l.line, l.col + 1))
                .unwrap_or((1, 1)),
        }
    }

    fn bump(&mut self) -> Option<Lexed> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> CftlError {
        let (line, col) = self.here();
        CftlError::Syntax { line, col, msg: msg.into() }
    }

    fn expect(&mut self, want: Tok, ctx: &str) -> Result<()> {
        match self.peek() {
            Some(t) if *t == want => {
                self.bump();
                Ok(())
            }
            Some(t) => Err(self.err_here(format!("expected {} {ctx}, found {}", want.describe(), t.describe()))),
            None => Err(self.err_here(format!("expected {} {ctx}, found end of input", want.describe()))),
        }
    }

    fn pure(&self, e: UExpr, what: &str) -> Result<Formula> {
        match e {
            UExpr::Pure(f) => Ok(f),
            UExpr::Cf(_) => Err(CftlError::Nesting(format!(
                "counterfactual conditionals cannot appear {what}"
            ))),
        }
    }

    // Full expression: one optional conditional over iff-level operands.
    fn parse_cf(&mut self) -> Result<UExpr> {
        let lhs = self.parse_iff()?;
        if let Some(Tok::CfKw(op)) = self.peek().cloned() {
            self.bump();
            let ant = self.pure(lhs, "inside a conditional's antecedent")?;
            let rhs = self.parse_iff()?;
            let cons = self.pure(rhs, "inside a conditional's consequent")?;
            if let Some(Tok::CfKw(op2)) = self.peek() {
                return Err(self.err_here(format!(
                    "conditionals are non-associative; parenthesize before '{}'",
                    op2.keyword()
                )));
            }
            Ok(UExpr::Cf(CfFormula::Cf(op, ant, cons)))
        } else {
            Ok(lhs)
        }
    }

    fn parse_iff(&mut self) -> Result<UExpr> {
        let mut l = self.parse_imp()?;
        while self.peek() == Some(&Tok::DArrow) {
            self.bump();
            let r = self.parse_imp()?;
            match (l, r) {
                (UExpr::Pure(a), UExpr::Pure(b)) => l = UExpr::Pure(Formula::iff(a, b)),
                _ => {
                    return Err(CftlError::Nesting(
                        "'<->' cannot combine counterfactual subformulas".into(),
                    ))
                }
            }
        }
        Ok(l)
    }

    fn parse_imp(&mut self) -> Result<UExpr> {
        let l = self.parse_or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.bump();
            let r = self.parse_imp()?;
            Ok(match (l, r) {
                (UExpr::Pure(a), UExpr::Pure(b)) => UExpr::Pure(Formula::implies(a, b)),
                // l -> r over conditionals desugars to !(l & !r).
                (l, r) => UExpr::Cf(CfFormula::cf_not(CfFormula::cf_and(l.lift(), r.negate()))),
            })
        } else {
            Ok(l)
        }
    }

    fn parse_or(&mut self) -> Result<UExpr> {
        let mut l = self.parse_and()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            let r = self.parse_and()?;
            l = match (l, r) {
                (UExpr::Pure(a), UExpr::Pure(b)) => UExpr::Pure(Formula::or(a, b)),
                // l | r over conditionals desugars to !(!l & !r).
                (l, r) => UExpr::Cf(CfFormula::cf_not(CfFormula::cf_and(l.negate(), r.negate()))),
            };
        }
        Ok(l)
    }

    fn parse_and(&mut self) -> Result<UExpr> {
        let mut l = self.parse_until()?;
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            let r = self.parse_until()?;
            l = match (l, r) {
                (UExpr::Pure(a), UExpr::Pure(b)) => UExpr::Pure(Formula::and(a, b)),
                (l, r) => UExpr::Cf(CfFormula::cf_and(l.lift(), r.lift())),
            };
        }
        Ok(l)
    }

    fn parse_until(&mut self) -> Result<UExpr> {
        let l = self.parse_unary()?;
        match self.peek() {
            Some(Tok::Until) => {
                self.bump();
                let lf = self.pure(l, "under 'U'")?;
                let r = self.parse_until()?;
                let rf = self.pure(r, "under 'U'")?;
                Ok(UExpr::Pure(Formula::until(lf, rf)))
            }
            Some(Tok::Release) => {
                self.bump();
                let lf = self.pure(l, "under 'R'")?;
                let r = self.parse_until()?;
                let rf = self.pure(r, "under 'R'")?;
                Ok(UExpr::Pure(Formula::Release(Box::new(lf), Box::new(rf))))
            }
            _ => Ok(l),
        }
    }

    fn parse_unary(&mut self) -> Result<UExpr> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.bump();
                let e = self.parse_unary()?;
                Ok(match e {
                    UExpr::Pure(f) => UExpr::Pure(Formula::not(f)),
                    UExpr::Cf(c) => UExpr::Cf(CfFormula::cf_not(c)),
                })
            }
            Some(Tok::Next) | Some(Tok::Finally) | Some(Tok::Globally) => {
                let tok = self.bump().unwrap().tok;
                let e = self.parse_unary()?;
                let f = self.pure(e, "under a temporal operator")?;
                Ok(UExpr::Pure(match tok {
                    Tok::Next => Formula::next(f),
                    Tok::Finally => Formula::finally(f),
                    _ => Formula::globally(f),
                }))
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<UExpr> {
        let (line, col) = self.here();
        match self.bump().map(|l| l.tok) {
            Some(Tok::LParen) => {
                let e = self.parse_cf()?;
                self.expect(Tok::RParen, "to close '('")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => Ok(UExpr::Pure(Formula::Atom(name))),
            Some(Tok::True) => Ok(UExpr::Pure(Formula::True)),
            Some(Tok::False) => Ok(UExpr::Pure(Formula::False)),
            Some(tok @ (Tok::Exists | Tok::Forall)) => {
                let name = match self.bump().map(|l| l.tok) {
                    Some(Tok::Ident(n)) => n,
                    other => {
                        return Err(self.err_here(format!(
                            "expected a proposition name after quantifier, found {}",
                            other.map(|t| t.describe()).unwrap_or_else(|| "end of input".into())
                        )))
                    }
                };
                if self.binders.iter().any(|b| b == &name) {
                    return Err(CftlError::Quantifier(format!(
                        "proposition '{name}' is already bound by an enclosing quantifier"
                    )));
                }
                self.expect(Tok::Dot, "after the quantified proposition")?;
                self.binders.push(name.clone());
                let body = self.parse_iff()?;
                self.binders.pop();
                let body = self.pure(body, "inside a propositional quantifier")?;
                Ok(UExpr::Pure(match tok {
                    Tok::Exists => Formula::Exists(name, Box::new(body)),
                    _ => Formula::Forall(name, Box::new(body)),
                }))
            }
            Some(t) => Err(CftlError::Syntax {
                line,
                col,
                msg: format!("expected a formula, found {}", t.describe()),
            }),
            None => Err(CftlError::Syntax {
                line,
                col,
                msg: "expected a formula, found end of input".into(),
            }),
        }
    }
}

/// Parses a top-level formula (Boolean combination of QPTL formulas and
/// conditionals).
pub fn parse_formula(text: &str) -> Result<CfFormula> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, binders: Vec::new() };
    let e = p.parse_cf()?;
    if let Some(t) = p.peek() {
        return Err(p.err_here(format!("unexpected {} after the formula", t.describe())));
    }
    let cf = e.lift();
    // Quantified names must be globally fresh: a name may not be both bound
    // somewhere and occur free somewhere else.  Keeps emitted quantifier
    // prefixes predictable without alpha-renaming.
    let binders = cf.binder_names();
    if let Some(clash) = binders.intersection(&cf.free_atoms()).next() {
        return Err(CftlError::Quantifier(format!(
            "proposition '{clash}' is both quantified and used free; rename the bound occurrence"
        )));
    }
    Ok(cf)
}

/// Parses a plain QPTL formula; rejects any counterfactual conditional.
pub fn parse_plain(text: &str) -> Result<Formula> {
    match parse_formula(text)? {
        CfFormula::Plain(f) => Ok(f),
        _ => Err(CftlError::Nesting(
            "counterfactual conditionals are not allowed in this position".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Formula {
        Formula::atom(s)
    }

    #[test]
    fn parses_basic_ltl() {
        let f = parse_plain("G (b -> X m)").unwrap();
        assert_eq!(
            f,
            Formula::globally(Formula::implies(a("b"), Formula::next(a("m"))))
        );
    }

    #[test]
    fn parses_conditional() {
        let f = parse_formula("F (u & X u) would F top").unwrap();
        assert_eq!(
            f,
            CfFormula::Cf(
                CfOp::Would,
                Formula::finally(Formula::and(a("u"), Formula::next(a("u")))),
                Formula::finally(a("top")),
            )
        );
    }

    #[test]
    fn rejects_nested_conditionals() {
        let e = parse_formula("(a would b) would c").unwrap_err();
        assert!(matches!(e, CftlError::Nesting(_)), "{e}");
        let e = parse_formula("X (a would b)").unwrap_err();
        assert!(matches!(e, CftlError::Nesting(_)), "{e}");
        let e = parse_formula("a would (b might c)").unwrap_err();
        assert!(matches!(e, CftlError::Nesting(_)), "{e}");
        let e = parse_formula("exists q. (a would b)").unwrap_err();
        assert!(matches!(e, CftlError::Nesting(_)), "{e}");
        let e = parse_formula("(a would b) <-> c").unwrap_err();
        assert!(matches!(e, CftlError::Nesting(_)), "{e}");
    }

    #[test]
    fn conditionals_are_non_associative() {
        let e = parse_formula("a would b might c").unwrap_err();
        assert!(matches!(e, CftlError::Syntax { .. }), "{e}");
    }

    #[test]
    fn conditional_takes_widest_operands() {
        // Everything to the left of the keyword joins the antecedent,
        // everything to the right joins the consequent.
        let f = parse_formula("A & b would c").unwrap();
        assert_eq!(f, CfFormula::Cf(CfOp::Would, Formula::and(a("A"), a("b")), a("c")));
        let f = parse_formula("!a would b").unwrap();
        assert_eq!(f, CfFormula::Cf(CfOp::Would, Formula::not(a("a")), a("b")));
        let f = parse_formula("a would b & c").unwrap();
        assert_eq!(f, CfFormula::Cf(CfOp::Would, a("a"), Formula::and(a("b"), a("c"))));
        let f = parse_formula("exists q. F q would b").unwrap();
        assert_eq!(
            f,
            CfFormula::Cf(
                CfOp::Would,
                Formula::Exists("q".into(), Box::new(Formula::finally(a("q")))),
                a("b")
            )
        );
    }

    #[test]
    fn boolean_connectives_over_conditionals_desugar() {
        let f = parse_formula("(a would b) | c").unwrap();
        assert_eq!(
            f,
            CfFormula::cf_not(CfFormula::cf_and(
                CfFormula::cf_not(CfFormula::Cf(CfOp::Would, a("a"), a("b"))),
                CfFormula::Plain(Formula::not(a("c"))),
            ))
        );
        let f = parse_formula("(a would b) -> c").unwrap();
        assert_eq!(
            f,
            CfFormula::cf_not(CfFormula::cf_and(
                CfFormula::Cf(CfOp::Would, a("a"), a("b")),
                CfFormula::Plain(Formula::not(a("c"))),
            ))
        );
        let f = parse_formula("(a would b) & c & (d might e)").unwrap();
        assert_eq!(
            f,
            CfFormula::cf_and(
                CfFormula::cf_and(
                    CfFormula::Cf(CfOp::Would, a("a"), a("b")),
                    CfFormula::Plain(a("c")),
                ),
                CfFormula::Cf(CfOp::Might, a("d"), a("e")),
            )
        );
    }

    #[test]
    fn quantifier_hygiene() {
        let e = parse_formula("exists q. exists q. q").unwrap_err();
        assert!(matches!(e, CftlError::Quantifier(_)), "{e}");
        let e = parse_formula("q & (exists q. F q)").unwrap_err();
        assert!(matches!(e, CftlError::Quantifier(_)), "{e}");
        let e = parse_formula("(exists q. F q) & q").unwrap_err();
        assert!(matches!(e, CftlError::Quantifier(_)), "{e}");
        // Sibling scopes may reuse a name.
        assert!(parse_formula("(exists q. F q) & (exists q. G q)").is_ok());
    }

    #[test]
    fn unary_letter_runs_split() {
        let f = parse_plain("XX top").unwrap();
        assert_eq!(f, Formula::next(Formula::next(a("top"))));
        let f = parse_plain("GF a").unwrap();
        assert_eq!(f, Formula::globally(Formula::finally(a("a"))));
        // A mixed run is a single identifier.
        assert_eq!(parse_plain("Xb").unwrap(), a("Xb"));
        assert_eq!(parse_plain("i_f").unwrap(), a("i_f"));
    }

    #[test]
    fn comments_and_positions() {
        assert!(parse_plain("a & # trailing comment\n b").is_ok());
        match parse_plain("a &\n & b").unwrap_err() {
            CftlError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 2);
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn renders_frozen_examples() {
        let f = CfFormula::Cf(
            CfOp::MightMin,
            Formula::not(Formula::and(a("f"), a("m"))),
            Formula::not(a("f")),
        );
        assert_eq!(render_formula(&f), "!(f & m) mightmin !f");
        assert_eq!(render_formula(&CfFormula::Plain(Formula::globally(a("a")))), "G a");
        let top = parse_formula("F (u & X u) would F top").unwrap();
        assert_eq!(render_formula(&top), "F (u & X u) would F top");
    }

    #[test]
    fn render_reparse_is_identity_on_frozen_strings() {
        for s in [
            "G (b -> X m)",
            "F (u & X u) would F top",
            "!(f & m) mightmin !f",
            "a U b U c",
            "(a U b) U c",
            "a & b & c",
            "a & (b & c)",
            "a | b & c",
            "(a | b) & c",
            "a -> b -> c",
            "(a -> b) -> c",
            "a <-> b <-> c",
            "exists q. !q & G (!q -> X q) & F (q & b)",
            "(exists q. F q) & b",
            "!(a would b)",
            "(a would b) & (c might d)",
            "((X u) | X X top) uwouldmin X X top",
            "f & m & !(!(f & m) mightmin !f)",
            "!e U c",
            "true & !false",
        ] {
            let f = parse_formula(s).unwrap();
            let r = render_formula(&f);
            let f2 = parse_formula(&r).unwrap();
            assert_eq!(f, f2, "round trip changed structure for '{s}' -> '{r}'");
        }
    }

    #[test]
    fn free_atoms_examples() {
        let f = parse_formula("exists q. F (q & b)").unwrap();
        assert_eq!(free_atoms(&f).into_iter().collect::<Vec<_>>(), vec!["b"]);
        let f = parse_formula("a & !a").unwrap();
        assert_eq!(free_atoms(&f).into_iter().collect::<Vec<_>>(), vec!["a"]);
        let elevator = parse_formula(
            "b & G ((b & u -> X m) & (b & d -> X b) & (m & u -> X t) & (m & d -> X b) \
             & (t & u -> X t) & (t & d -> X m))",
        )
        .unwrap();
        assert_eq!(
            free_atoms(&elevator).into_iter().collect::<Vec<_>>(),
            vec!["b", "d", "m", "t", "u"]
        );
    }

    #[test]
    fn rename_free_respects_binders() {
        let f = parse_plain("exists q. F (q & b)").unwrap();
        let renamed = f.rename_free(&|s| format!("{s}_p1"));
        assert_eq!(renamed, parse_plain("exists q. F (q & b_p1)").unwrap());
    }
}
