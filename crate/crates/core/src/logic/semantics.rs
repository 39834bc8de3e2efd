use std::collections::BTreeMap;

use super::{atoms_of, Atom, Formula, LogicError};

/// Largest atom count `is_consistent` will enumerate by default.
pub const DEFAULT_ATOM_CAP: usize = 24;

/// A truth assignment to a set of atoms.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Interpretation {
    assignment: BTreeMap<Atom, bool>,
}

impl Interpretation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, atom: Atom, value: bool) -> &mut Self {
        self.assignment.insert(atom, value);
        self
    }

    pub fn get(&self, atom: &Atom) -> Option<bool> {
        self.assignment.get(atom).copied()
    }

    /// Interpretation of `atoms` (in order) given by the low bits of `mask`.
    pub fn from_mask<'a>(atoms: impl IntoIterator<Item = &'a Atom>, mask: u64) -> Self {
        let assignment = atoms.into_iter().enumerate().map(|(i, a)| (a.clone(), mask >> i & 1 == 1)).collect();
        Interpretation { assignment }
    }
}

impl FromIterator<(Atom, bool)> for Interpretation {
    fn from_iter<I: IntoIterator<Item = (Atom, bool)>>(iter: I) -> Self {
        Interpretation { assignment: iter.into_iter().collect() }
    }
}

pub fn satisfies(w: &Interpretation, f: &Formula) -> Result<bool, LogicError> {
    match f {
        Formula::Lit(l) => {
            w.get(&l.atom).map(|v| v != l.negated).ok_or_else(|| LogicError::MissingAtom(l.atom.name().to_string()))
        }
        Formula::And(cs) => {
            for c in cs {
                if !satisfies(w, c)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(cs) => {
            for c in cs {
                if satisfies(w, c)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

/// `w` satisfies every member of `formulas`.
///
/// Totality is checked up front, so a missing atom is reported even when an
/// earlier member already evaluates to false.
pub fn satisfies_all<'a>(
    w: &Interpretation,
    formulas: impl IntoIterator<Item = &'a Formula>,
) -> Result<bool, LogicError> {
    let formulas: Vec<&Formula> = formulas.into_iter().collect();
    if let Some(missing) = atoms_of(formulas.iter().copied()).into_iter().find(|a| w.get(a).is_none()) {
        return Err(LogicError::MissingAtom(missing.name().to_string()));
    }
    for f in formulas {
        if !satisfies(w, f)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Formula over atom indices, evaluated against a bitmask assignment.
#[derive(Debug, Clone)]
pub(crate) enum Compiled {
    Lit { var: u32, negated: bool },
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
}

impl Compiled {
    pub(crate) fn new(f: &Formula, index_of: &impl Fn(&Atom) -> u32) -> Self {
        match f {
            Formula::Lit(l) => Compiled::Lit { var: index_of(&l.atom), negated: l.negated },
            Formula::And(cs) => Compiled::And(cs.iter().map(|c| Compiled::new(c, index_of)).collect()),
            Formula::Or(cs) => Compiled::Or(cs.iter().map(|c| Compiled::new(c, index_of)).collect()),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, mask: u64) -> bool {
        match self {
            Compiled::Lit { var, negated } => (mask >> var & 1 == 1) != *negated,
            Compiled::And(cs) => cs.iter().all(|c| c.eval(mask)),
            Compiled::Or(cs) => cs.iter().any(|c| c.eval(mask)),
        }
    }
}

/// Whether some interpretation satisfies all of `formulas`, enumerating
/// interpretations over their atoms and stopping at the first model.
pub fn is_consistent(formulas: &[Formula]) -> Result<bool, LogicError> {
    is_consistent_with_cap(formulas, DEFAULT_ATOM_CAP)
}

pub fn is_consistent_with_cap(formulas: &[Formula], cap: usize) -> Result<bool, LogicError> {
    let atoms: Vec<Atom> = atoms_of(formulas).into_iter().collect();
    if atoms.len() > cap {
        return Err(LogicError::AtomCap { atoms: atoms.len(), cap });
    }
    let index_of = |a: &Atom| atoms.binary_search(a).unwrap() as u32;
    let compiled: Vec<Compiled> = formulas.iter().map(|f| Compiled::new(f, &index_of)).collect();
    let total = 1u64 << atoms.len();
    Ok((0..total).any(|mask| compiled.iter().all(|c| c.eval(mask))))
}
