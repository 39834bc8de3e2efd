//! Propositional formulas built from literals with conjunction and disjunction.
//!
//! Negation is only allowed directly on atoms, so every [`Formula`] is a tree
//! of `And`/`Or` nodes over [`Literal`] leaves. Nested nodes with the same
//! operator are flattened on construction, which gives each tree a single
//! canonical text form (see [`Formula::canonical`]).

mod parse;
mod semantics;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use parse::{parse_formula, ParseError, ParseErrorKind};
pub(crate) use semantics::Compiled;
pub use semantics::{
    is_consistent, is_consistent_with_cap, satisfies, satisfies_all, Interpretation, DEFAULT_ATOM_CAP,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("invalid atom name {0:?}: expected a lowercase letter followed by [a-z0-9_]*")]
    InvalidAtom(String),
    #[error("interpretation does not assign atom `{0}`")]
    MissingAtom(String),
    #[error("{atoms} atoms exceed the enumeration cap of {cap}")]
    AtomCap { atoms: usize, cap: usize },
}

/// A propositional atom such as `a` or `rule_7`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(String);

impl Atom {
    pub fn new(name: impl Into<String>) -> Result<Self, LogicError> {
        let name = name.into();
        if is_identifier(&name) {
            Ok(Atom(name))
        } else {
            Err(LogicError::InvalidAtom(name))
        }
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal { atom, negated: false }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal { atom, negated: true }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "!{}", self.atom)
        } else {
            write!(f, "{}", self.atom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connective {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Lit(Literal),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn lit(literal: Literal) -> Self {
        Formula::Lit(literal)
    }

    /// Conjunction of `children`, flattening nested conjunctions.
    ///
    /// A single child is returned unchanged. Panics on an empty list.
    pub fn and(children: impl IntoIterator<Item = Formula>) -> Self {
        Self::join(Connective::And, children)
    }

    /// Disjunction of `children`, flattening nested disjunctions.
    ///
    /// A single child is returned unchanged. Panics on an empty list.
    pub fn or(children: impl IntoIterator<Item = Formula>) -> Self {
        Self::join(Connective::Or, children)
    }

    pub fn join(op: Connective, children: impl IntoIterator<Item = Formula>) -> Self {
        let mut flat = Vec::new();
        for child in children {
            match (op, child) {
                (Connective::And, Formula::And(inner)) | (Connective::Or, Formula::Or(inner)) => flat.extend(inner),
                (_, other) => flat.push(other),
            }
        }
        assert!(!flat.is_empty(), "connective needs at least one operand");
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        match op {
            Connective::And => Formula::And(flat),
            Connective::Or => Formula::Or(flat),
        }
    }

    pub fn connective(&self) -> Option<Connective> {
        match self {
            Formula::Lit(_) => None,
            Formula::And(_) => Some(Connective::And),
            Formula::Or(_) => Some(Connective::Or),
        }
    }

    /// Canonical text form; `parse_formula` inverts it exactly.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    fn write_canonical(&self, out: &mut String) {
        match self {
            Formula::Lit(l) => {
                if l.negated {
                    out.push('!');
                }
                out.push_str(l.atom.name());
            }
            Formula::And(children) | Formula::Or(children) => {
                let (sep, wrap_or) = match self {
                    Formula::And(_) => (" & ", true),
                    _ => (" | ", false),
                };
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        out.push_str(sep);
                    }
                    // '&' binds tighter than '|', so only a disjunction under a
                    // conjunction needs parentheses.
                    let parens = wrap_or && matches!(child, Formula::Or(_));
                    if parens {
                        out.push('(');
                    }
                    child.write_canonical(out);
                    if parens {
                        out.push(')');
                    }
                }
            }
        }
    }

    /// Literal occurrences in left-to-right order.
    pub fn literals(&self) -> Vec<&Literal> {
        let mut acc = Vec::new();
        self.collect_literals(&mut acc);
        acc
    }

    fn collect_literals<'a>(&'a self, acc: &mut Vec<&'a Literal>) {
        match self {
            Formula::Lit(l) => acc.push(l),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_literals(acc)),
        }
    }

    pub fn literal_count(&self) -> usize {
        match self {
            Formula::Lit(_) => 1,
            Formula::And(cs) | Formula::Or(cs) => cs.iter().map(Formula::literal_count).sum(),
        }
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.literals().into_iter().map(|l| l.atom.clone()).collect()
    }

    /// Rebuilds the tree through the flattening constructors.
    pub fn normalized(&self) -> Formula {
        match self {
            Formula::Lit(l) => Formula::Lit(l.clone()),
            Formula::And(cs) => Formula::and(cs.iter().map(Formula::normalized)),
            Formula::Or(cs) => Formula::or(cs.iter().map(Formula::normalized)),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Serializes a formula to its canonical text.
pub fn serialize_formula(f: &Formula) -> String {
    f.canonical()
}

/// A finite set of formulas that remembers insertion order.
///
/// Two formulas are the same member iff their canonical strings are equal.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    formulas: Vec<Formula>,
    keys: Vec<String>,
    seen: HashSet<String>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `f` unless an equal formula is already present; returns whether
    /// it was added.
    pub fn insert(&mut self, f: Formula) -> bool {
        let key = f.canonical();
        if !self.seen.insert(key.clone()) {
            return false;
        }
        self.formulas.push(f);
        self.keys.push(key);
        true
    }

    /// Parses each entry; duplicate formulas are dropped.
    pub fn parse<S: AsRef<str>>(texts: impl IntoIterator<Item = S>) -> Result<Self, ParseError> {
        let mut kb = KnowledgeBase::new();
        for text in texts {
            kb.insert(parse_formula(text.as_ref())?);
        }
        Ok(kb)
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn get(&self, i: usize) -> Option<&Formula> {
        self.formulas.get(i)
    }

    /// Canonical strings in insertion order.
    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.seen.contains(&f.canonical())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Formula> {
        self.formulas.iter()
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        atoms_of(&self.formulas)
    }
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.keys == other.keys
    }
}

impl Eq for KnowledgeBase {}

impl FromIterator<Formula> for KnowledgeBase {
    fn from_iter<I: IntoIterator<Item = Formula>>(iter: I) -> Self {
        let mut kb = KnowledgeBase::new();
        for f in iter {
            kb.insert(f);
        }
        kb
    }
}

impl<'a> IntoIterator for &'a KnowledgeBase {
    type Item = &'a Formula;
    type IntoIter = std::slice::Iter<'a, Formula>;

    fn into_iter(self) -> Self::IntoIter {
        self.formulas.iter()
    }
}

/// Every atom occurring in any of `formulas`.
pub fn atoms_of<'a>(formulas: impl IntoIterator<Item = &'a Formula>) -> BTreeSet<Atom> {
    let mut atoms = BTreeSet::new();
    for f in formulas {
        for l in f.literals() {
            if !atoms.contains(&l.atom) {
                atoms.insert(l.atom.clone());
            }
        }
    }
    atoms
}
