//! Minimal inconsistent subsets and the two measures derived from them.
//!
//! `I_MI` counts the minimal inconsistent subsets of a knowledge base; `I_at`
//! counts the atoms that occur in formulas belonging to at least one of them.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Dataset;
use crate::encoding::consistency_flag;
use crate::logic::{atoms_of, is_consistent, Atom, Compiled, Formula, KnowledgeBase, LogicError, DEFAULT_ATOM_CAP};

/// Subset enumeration tracks members in a `u64`.
pub const MAX_KB_FORMULAS: usize = 63;
/// Formula-count cap of the brute-force oracle.
pub const BRUTEFORCE_MAX_FORMULAS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("knowledge base has {len} formulas, more than the supported {max}")]
    TooManyFormulas { len: usize, max: usize },
    #[error("entropy of an empty value sequence")]
    EmptyValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Mi,
    At,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Mi => "mi",
            Measure::At => "at",
        })
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mi" => Ok(Measure::Mi),
            "at" => Ok(Measure::At),
            other => Err(format!("unknown measure {other:?} (expected mi or at)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureValue {
    pub measure: Measure,
    pub value: usize,
}

/// The minimal inconsistent subsets of a knowledge base.
///
/// Each subset lists its formulas by canonical string; subsets are ordered by
/// cardinality, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MisSet {
    subsets: Vec<Vec<Formula>>,
}

impl MisSet {
    fn from_index_sets(kb: &KnowledgeBase, masks: &[u64]) -> Self {
        let mut subsets: Vec<(Vec<String>, Vec<Formula>)> = masks
            .iter()
            .map(|&mask| {
                let mut members: Vec<(String, Formula)> = (0..kb.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| (kb.keys()[i].clone(), kb.formulas()[i].clone()))
                    .collect();
                members.sort_by(|a, b| a.0.cmp(&b.0));
                members.into_iter().unzip()
            })
            .collect();
        subsets.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        subsets.dedup_by(|a, b| a.0 == b.0);
        MisSet { subsets: subsets.into_iter().map(|(_, fs)| fs).collect() }
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[Vec<Formula>] {
        &self.subsets
    }

    /// Canonical strings of each subset, in order.
    pub fn as_strings(&self) -> Vec<Vec<String>> {
        self.subsets.iter().map(|s| s.iter().map(Formula::canonical).collect()).collect()
    }

    /// Union of all subsets, deduplicated, in first-occurrence order.
    pub fn union(&self) -> Vec<Formula> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for f in self.subsets.iter().flatten() {
            if seen.insert(f.canonical()) {
                out.push(f.clone());
            }
        }
        out
    }
}

/// Model sets of each formula as bitsets over all interpretations of the
/// knowledge base's atoms.
struct ModelTables {
    words: usize,
    tables: Vec<Vec<u64>>,
}

impl ModelTables {
    fn build(kb: &KnowledgeBase) -> Result<Self, MeasureError> {
        let atoms: Vec<Atom> = kb.atoms().into_iter().collect();
        if atoms.len() > DEFAULT_ATOM_CAP {
            return Err(LogicError::AtomCap { atoms: atoms.len(), cap: DEFAULT_ATOM_CAP }.into());
        }
        let index_of = |a: &Atom| atoms.binary_search(a).unwrap() as u32;
        let total = 1usize << atoms.len();
        let words = total.div_ceil(64);
        let tables = kb
            .iter()
            .map(|f| {
                let c = Compiled::new(f, &index_of);
                let mut bits = vec![0u64; words];
                for mask in 0..total {
                    if c.eval(mask as u64) {
                        bits[mask / 64] |= 1 << (mask % 64);
                    }
                }
                bits
            })
            .collect();
        Ok(ModelTables { words, tables })
    }

    fn jointly_satisfiable(&self, members: &[usize], scratch: &mut [u64]) -> bool {
        scratch.copy_from_slice(&self.tables[members[0]]);
        for &m in &members[1..] {
            let mut any = 0u64;
            for (s, t) in scratch.iter_mut().zip(&self.tables[m]) {
                *s &= t;
                any |= *s;
            }
            if any == 0 {
                return false;
            }
        }
        scratch.iter().any(|&w| w != 0)
    }
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic
/// order; false when exhausted.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Enumerates MI(K) by increasing subset size.
///
/// Subsets containing an already found MIS are skipped. A surviving subset
/// that is inconsistent is minimal: each of its proper subsets was tested
/// consistent at a smaller size, otherwise it would have been pruned.
pub fn enumerate_mis(kb: &KnowledgeBase) -> Result<MisSet, MeasureError> {
    let n = kb.len();
    if n > MAX_KB_FORMULAS {
        return Err(MeasureError::TooManyFormulas { len: n, max: MAX_KB_FORMULAS });
    }
    if n == 0 {
        return Ok(MisSet::default());
    }
    let tables = ModelTables::build(kb)?;
    let mut scratch = vec![0u64; tables.words];
    let mut found: Vec<u64> = Vec::new();
    for size in 1..=n {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let mask = idx.iter().fold(0u64, |m, &i| m | 1 << i);
            let pruned = found.iter().any(|&m| m & !mask == 0);
            if !pruned && !tables.jointly_satisfiable(&idx, &mut scratch) {
                found.push(mask);
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    Ok(MisSet::from_index_sets(kb, &found))
}

/// Reference enumeration: tests every subset with [`is_consistent`] and keeps
/// the inclusion-minimal inconsistent ones.
pub fn enumerate_mis_bruteforce(kb: &KnowledgeBase) -> Result<MisSet, MeasureError> {
    let n = kb.len();
    if n > BRUTEFORCE_MAX_FORMULAS {
        return Err(MeasureError::TooManyFormulas { len: n, max: BRUTEFORCE_MAX_FORMULAS });
    }
    let mut inconsistent = Vec::new();
    for mask in 1u64..(1 << n) {
        let subset: Vec<Formula> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| kb.formulas()[i].clone()).collect();
        if !is_consistent(&subset)? {
            inconsistent.push(mask);
        }
    }
    let minimal: Vec<u64> =
        inconsistent.iter().copied().filter(|&m| !inconsistent.iter().any(|&o| o != m && o & m == o)).collect();
    Ok(MisSet::from_index_sets(kb, &minimal))
}

/// Formulas of `kb` that belong to at least one minimal inconsistent subset.
pub fn problematic(kb: &KnowledgeBase) -> Result<Vec<Formula>, MeasureError> {
    Ok(problematic_of(kb, &enumerate_mis(kb)?))
}

fn problematic_of(kb: &KnowledgeBase, mis: &MisSet) -> Vec<Formula> {
    let members: BTreeSet<String> = mis.subsets.iter().flatten().map(Formula::canonical).collect();
    kb.iter().filter(|f| members.contains(&f.canonical())).cloned().collect()
}

pub fn i_mi(kb: &KnowledgeBase) -> Result<MeasureValue, MeasureError> {
    Ok(MeasureValue { measure: Measure::Mi, value: enumerate_mis(kb)?.len() })
}

pub fn i_at(kb: &KnowledgeBase) -> Result<MeasureValue, MeasureError> {
    let mis = enumerate_mis(kb)?;
    Ok(MeasureValue { measure: Measure::At, value: at_from(kb, &mis) })
}

fn at_from(kb: &KnowledgeBase, mis: &MisSet) -> usize {
    atoms_of(problematic_of(kb, mis).iter()).len()
}

/// Both measures from a single enumeration, as `(i_mi, i_at)`.
pub fn measure_kb(kb: &KnowledgeBase) -> Result<(usize, usize), MeasureError> {
    let mis = enumerate_mis(kb)?;
    Ok((mis.len(), at_from(kb, &mis)))
}

/// Same as [`measure_kb`] but routed through the brute-force oracle.
pub fn measure_kb_bruteforce(kb: &KnowledgeBase) -> Result<(usize, usize), MeasureError> {
    let mis = enumerate_mis_bruteforce(kb)?;
    Ok((mis.len(), at_from(kb, &mis)))
}

/// Shannon entropy (natural log) of the empirical distribution of `values`.
pub fn value_entropy(values: &[f64]) -> Result<f64, MeasureError> {
    if values.is_empty() {
        return Err(MeasureError::EmptyValues);
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for &v in values {
        // fold -0.0 into 0.0
        let key = if v == 0.0 { 0.0f64.to_bits() } else { v.to_bits() };
        *counts.entry(key).or_default() += 1;
    }
    let n = values.len() as f64;
    let mut freqs: Vec<usize> = counts.into_values().collect();
    freqs.sort_unstable();
    Ok(freqs
        .into_iter()
        .map(|f| {
            let p = f as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelStats {
    pub max: usize,
    pub min: usize,
    pub entropy: f64,
}

impl LabelStats {
    fn of(values: &[usize]) -> Self {
        let as_f: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        LabelStats {
            max: values.iter().copied().max().unwrap_or(0),
            min: values.iter().copied().min().unwrap_or(0),
            entropy: value_entropy(&as_f).unwrap_or(0.0),
        }
    }
}

/// Per-dataset summary: label range and entropy for both measures, and how
/// many instances the syntactic consistency heuristic flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub instances: usize,
    pub mi: LabelStats,
    pub at: LabelStats,
    pub flagged_consistent: usize,
}

impl DatasetStats {
    pub const CSV_HEADER: &'static str =
        "instances,mi_max,mi_min,mi_entropy,at_max,at_min,at_entropy,flagged_consistent";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{},{:.6},{}",
            self.instances,
            self.mi.max,
            self.mi.min,
            self.mi.entropy,
            self.at.max,
            self.at.min,
            self.at.entropy,
            self.flagged_consistent
        )
    }
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    let mi: Vec<usize> = d.instances.iter().map(|i| i.label_mi).collect();
    let at: Vec<usize> = d.instances.iter().map(|i| i.label_at).collect();
    DatasetStats {
        instances: d.instances.len(),
        mi: LabelStats::of(&mi),
        at: LabelStats::of(&at),
        flagged_consistent: d.instances.iter().filter(|i| consistency_flag(&i.kb)).count(),
    }
}
