//! Lasso traces: finite representations of ultimately periodic infinite words.
//!
//! A lasso `prefix · loop^ω` is kept in canonical form — the loop is
//! primitive (not a power of a shorter word) and maximally rolled back into
//! the prefix — so that two lassos denote the same infinite word exactly when
//! they are equal.  The module also provides alignment of several lassos to a
//! common shape and the change-subset similarity relation that orders traces
//! by which positions/propositions they flip relative to a reference.

use crate::error::{CftlError, Result};
use std::collections::BTreeSet;
use std::fmt;

/// One position of a trace: the set of propositions holding there.
pub type Letter = BTreeSet<String>;

/// An ultimately periodic trace `prefix · loop^ω` over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LassoTrace {
    prefix: Vec<Letter>,
    loop_: Vec<Letter>,
    alphabet: BTreeSet<String>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

pub(crate) fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

impl LassoTrace {
    /// Builds a canonical lasso. The loop must be nonempty and every letter
    /// must only mention alphabet propositions.
    pub fn new(
        prefix: Vec<Letter>,
        loop_: Vec<Letter>,
        alphabet: BTreeSet<String>,
    ) -> Result<LassoTrace> {
        if loop_.is_empty() {
            return Err(CftlError::Input("lasso loop must be nonempty".into()));
        }
        for letter in prefix.iter().chain(&loop_) {
            if let Some(p) = letter.iter().find(|p| !alphabet.contains(*p)) {
                return Err(CftlError::AlphabetMismatch(format!(
                    "proposition '{p}' is not in the alphabet"
                )));
            }
        }
        let mut t = LassoTrace { prefix, loop_, alphabet };
        t.canonicalize();
        Ok(t)
    }

    fn canonicalize(&mut self) {
        // Primitive loop: replace by the shortest word it is a power of.
        let n = self.loop_.len();
        for d in 1..n {
            if n % d == 0 && (d..n).all(|i| self.loop_[i] == self.loop_[i % d]) {
                self.loop_.truncate(d);
                break;
            }
        }
        // Roll the loop back over the prefix while the last letters agree.
        while let Some(last) = self.prefix.last() {
            if last == self.loop_.last().unwrap() {
                self.prefix.pop();
                let tail = self.loop_.pop().unwrap();
                self.loop_.insert(0, tail);
            } else {
                break;
            }
        }
    }

    pub fn prefix(&self) -> &[Letter] {
        &self.prefix
    }

    pub fn loop_letters(&self) -> &[Letter] {
        &self.loop_
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    /// `(prefix length, loop length)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.prefix.len(), self.loop_.len())
    }

    /// The letter at position `i` of the infinite word.
    pub fn letter_at(&self, i: usize) -> &Letter {
        if i < self.prefix.len() {
            &self.prefix[i]
        } else {
            &self.loop_[(i - self.prefix.len()) % self.loop_.len()]
        }
    }

    /// Whether proposition `p` holds at position `i`.
    pub fn holds_at(&self, p: &str, i: usize) -> bool {
        self.letter_at(i).contains(p)
    }

    /// The single-letter lasso `{letter}^ω`.
    pub fn constant(letter: Letter, alphabet: BTreeSet<String>) -> Result<LassoTrace> {
        LassoTrace::new(Vec::new(), vec![letter], alphabet)
    }

    /// Same infinite word re-represented with shape exactly `(p, l)`.
    /// Requires `p ≥ prefix length` and `loop length | l`.
    pub fn with_shape(&self, p: usize, l: usize) -> LassoTrace {
        debug_assert!(p >= self.prefix.len() && l % self.loop_.len() == 0);
        let prefix = (0..p).map(|i| self.letter_at(i).clone()).collect();
        let loop_ = (p..p + l).map(|i| self.letter_at(i).clone()).collect();
        LassoTrace { prefix, loop_, alphabet: self.alphabet.clone(), }
    }

    /// Parses a trace literal like `{b,u}{m,d}|{b,u}{m,d}`; letters before
    /// `|` form the prefix, letters after it the loop, `{}` is the empty
    /// letter.  The alphabet is the union of all mentioned propositions.
    pub fn parse(text: &str) -> Result<LassoTrace> {
        let mut alphabet = BTreeSet::new();
        let (prefix, loop_) = parse_letters(text, &mut alphabet)?;
        LassoTrace::new(prefix, loop_, alphabet)
    }

    /// Like [`parse`](Self::parse) but against a fixed alphabet; mentioning
    /// an unknown proposition is an error.
    pub fn parse_with_alphabet(text: &str, alphabet: &BTreeSet<String>) -> Result<LassoTrace> {
        let mut seen = BTreeSet::new();
        let (prefix, loop_) = parse_letters(text, &mut seen)?;
        LassoTrace::new(prefix, loop_, alphabet.clone())
    }

    /// Rebuilds the trace over a larger alphabet (all new propositions
    /// false everywhere).
    pub fn extend_alphabet(&self, alphabet: &BTreeSet<String>) -> Result<LassoTrace> {
        if !self.alphabet.is_subset(alphabet) {
            return Err(CftlError::AlphabetMismatch(
                "new alphabet must contain the trace's alphabet".into(),
            ));
        }
        LassoTrace::new(self.prefix.clone(), self.loop_.clone(), alphabet.clone())
    }
}

fn parse_letters(text: &str, seen: &mut BTreeSet<String>) -> Result<(Vec<Letter>, Vec<Letter>)> {
    let bar = text
        .match_indices('|')
        .map(|(i, _)| i)
        .collect::<Vec<_>>();
    if bar.len() != 1 {
        return Err(CftlError::Input(format!(
            "trace literal must contain exactly one '|' separating prefix and loop, got {:?}",
            text
        )));
    }
    let prefix = parse_letter_seq(&text[..bar[0]], seen)?;
    let loop_ = parse_letter_seq(&text[bar[0] + 1..], seen)?;
    if loop_.is_empty() {
        return Err(CftlError::Input("trace literal needs at least one loop letter".into()));
    }
    Ok((prefix, loop_))
}

fn parse_letter_seq(text: &str, seen: &mut BTreeSet<String>) -> Result<Vec<Letter>> {
    let mut letters = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if !rest.starts_with('{') {
            return Err(CftlError::Input(format!(
                "expected '{{' at start of trace letter, found {:?}",
                rest
            )));
        }
        let close = rest.find('}').ok_or_else(|| {
            CftlError::Input(format!("unterminated trace letter in {:?}", rest))
        })?;
        let inner = &rest[1..close];
        let mut letter = Letter::new();
        for part in inner.split(',') {
            let p = part.trim();
            if p.is_empty() {
                continue;
            }
            if !p.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
                || !p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                return Err(CftlError::Input(format!("invalid proposition name {p:?}")));
            }
            seen.insert(p.to_string());
            letter.insert(p.to_string());
        }
        letters.push(letter);
        rest = rest[close + 1..].trim_start();
    }
    Ok(letters)
}

impl fmt::Display for LassoTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let write_letter = |f: &mut fmt::Formatter<'_>, l: &Letter| -> fmt::Result {
            write!(f, "{{")?;
            for (i, p) in l.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{p}")?;
            }
            write!(f, "}}")
        };
        for l in &self.prefix {
            write_letter(f, l)?;
        }
        write!(f, "|")?;
        for l in &self.loop_ {
            write_letter(f, l)?;
        }
        Ok(())
    }
}

/// Re-represents all traces with one common shape: prefix length `P` = max of
/// prefix lengths, loop length `L` = lcm of loop lengths.  Returns `(P, L)`
/// and, per trace, its first `P + L` letters (which determine it entirely at
/// that shape).
pub fn align_lassos(ts: &[&LassoTrace]) -> Result<(usize, usize, Vec<Vec<Letter>>)> {
    let Some(first) = ts.first() else {
        return Ok((0, 1, Vec::new()));
    };
    for t in ts {
        if t.alphabet != first.alphabet {
            return Err(CftlError::AlphabetMismatch(
                "aligned traces must share one alphabet".into(),
            ));
        }
    }
    let p = ts.iter().map(|t| t.prefix.len()).max().unwrap();
    let l = ts.iter().fold(1, |acc, t| lcm(acc, t.loop_.len()));
    let unrolled = ts
        .iter()
        .map(|t| (0..p + l).map(|i| t.letter_at(i).clone()).collect())
        .collect();
    Ok((p, l, unrolled))
}

/// Change-subset similarity `t1 ≤ t2` relative to `reference` and the
/// proposition set `X`: every (position, x∈X) where `t1` differs from the
/// reference must also differ in `t2`.  Decided exactly on the aligned
/// representation — after alignment all difference patterns repeat with the
/// common loop, so positions `[0, P+L)` determine containment for all n.
pub fn subset_similarity(
    reference: &LassoTrace,
    t1: &LassoTrace,
    t2: &LassoTrace,
    x: &BTreeSet<String>,
) -> Result<bool> {
    if let Some(p) = x.iter().find(|p| !reference.alphabet.contains(*p)) {
        return Err(CftlError::AlphabetMismatch(format!(
            "similarity proposition '{p}' is not in the alphabet"
        )));
    }
    let (p, l, unrolled) = align_lassos(&[reference, t1, t2])?;
    for i in 0..p + l {
        for prop in x {
            let r = unrolled[0][i].contains(prop);
            let d1 = unrolled[1][i].contains(prop) != r;
            let d2 = unrolled[2][i].contains(prop) != r;
            if d1 && !d2 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> LassoTrace {
        LassoTrace::parse(s).unwrap()
    }

    fn ta(s: &str, props: &[&str]) -> LassoTrace {
        let alphabet: BTreeSet<String> = props.iter().map(|p| p.to_string()).collect();
        LassoTrace::parse_with_alphabet(s, &alphabet).unwrap()
    }

    #[test]
    fn canonicalizes_redundant_prefix_and_loop_powers() {
        // Redundant prefix copy rolls back into the pure loop; letters print
        // with sorted propositions.
        let a = t("{b,u}{m,d}|{b,u}{m,d}");
        assert_eq!(a.shape(), (0, 2));
        assert_eq!(a.to_string(), "|{b,u}{d,m}");
        // Loop powers collapse to the primitive word.
        let b = t("|{a}{b}{a}{b}");
        assert_eq!(b.shape(), (0, 2));
        // Partial rollback rotates the loop.
        let c = t("{x}|{y}{x}");
        assert_eq!(c.shape(), (0, 2));
        assert_eq!(c.letter_at(0), t("|{x}{y}").letter_at(0));
        for i in 0..6 {
            assert_eq!(c.letter_at(i), t("{x}{y}{x}{y}|{x}{y}").letter_at(i));
        }
    }

    #[test]
    fn equal_words_have_equal_canonical_forms() {
        assert_eq!(t("{a}{b}|{a}{b}"), t("|{a}{b}"));
        assert_eq!(t("{a}|{b}{a}{b}{a}"), t("{a}{b}|{a}{b}"));
        assert_ne!(t("{a}|{b}"), t("|{a}{b}"));
    }

    #[test]
    fn letter_positions_wrap_through_the_loop() {
        let a = t("{p}|{q}{r}");
        let expect = ["p", "q", "r", "q", "r"];
        for (i, e) in expect.iter().enumerate() {
            assert!(a.holds_at(e, i), "position {i}");
        }
    }

    #[test]
    fn parses_and_prints_empty_letters() {
        let fire = t("{f,m}|{}");
        assert_eq!(fire.to_string(), "{f,m}|{}");
        assert_eq!(fire.shape(), (1, 1));
        assert!(fire.holds_at("f", 0) && fire.holds_at("m", 0));
        assert!(!fire.holds_at("f", 3));
    }

    #[test]
    fn rejects_malformed_literals() {
        assert!(LassoTrace::parse("{a}{b}").is_err());
        assert!(LassoTrace::parse("{a}|").is_err());
        assert!(LassoTrace::parse("{a|{b}").is_err());
        assert!(LassoTrace::parse("{1a}|{b}").is_err());
        let alphabet: BTreeSet<String> = ["a".to_string()].into();
        assert!(LassoTrace::parse_with_alphabet("|{a,zz}", &alphabet).is_err());
        assert!(LassoTrace::parse_with_alphabet("|{a}", &alphabet).is_ok());
    }

    #[test]
    fn alignment_shapes() {
        let ps = ["q", "x", "y", "z"];
        let a = ta("{x}{y}|{x}{y}", &ps); // canonical (0,2)
        let b = ta("|{z}", &ps);
        let (p, l, un) = align_lassos(&[&a, &b]).unwrap();
        assert_eq!((p, l), (0, 2));
        assert_eq!(un[0].len(), 2);
        let c = ta("|{x}{y}", &ps);
        let d = ta("|{x}{y}{z}", &ps);
        let (_, l, _) = align_lassos(&[&c, &d]).unwrap();
        assert_eq!(l, 6);
        let e = ta("{q}{q}|{x}{y}", &ps);
        let (p, l, un) = align_lassos(&[&e, &b]).unwrap();
        assert_eq!((p, l), (2, 2));
        // Re-represented trace denotes the same word.
        for (i, letter) in un[0].iter().enumerate() {
            assert_eq!(letter, e.letter_at(i));
        }
    }

    #[test]
    fn similarity_contains_elevator_difference_sets() {
        // Reference cycles bottom/middle; the two variants stay at the
        // bottom for zero or two extra steps.
        let ps = ["b", "m", "u", "d"];
        let reference = ta("{b,u}{m,d}|{b,u}{m,d}", &ps);
        let t2 = ta("|{b,d}", &ps);
        let t1 = ta("{b,d}{b,d}|{b,u}{m,d}", &ps);
        let x: BTreeSet<String> = ["u".to_string(), "d".to_string()].into();
        assert!(subset_similarity(&reference, &t1, &t2, &x).unwrap());
        assert!(!subset_similarity(&reference, &t2, &t1, &x).unwrap());
        // Reflexivity, and the reference below everything.
        for s in [&reference, &t1, &t2] {
            assert!(subset_similarity(&reference, s, s, &x).unwrap());
            assert!(subset_similarity(&reference, &reference, s, &x).unwrap());
        }
    }

    #[test]
    fn incomparable_single_position_differences() {
        let reference = t("|{u}");
        let t1 = ta("{}|{u}", &["u"]);
        let t2 = ta("{u}{}|{u}", &["u"]);
        let x: BTreeSet<String> = ["u".to_string()].into();
        assert!(!subset_similarity(&reference, &t1, &t2, &x).unwrap());
        assert!(!subset_similarity(&reference, &t2, &t1, &x).unwrap());
    }
}
