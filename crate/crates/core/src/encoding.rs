//! Bag-of-formulas feature vectors with optional flag columns.
//!
//! Column layout of an encoded row: one bit per vocabulary formula, then the
//! `consistent` flag (if enabled), then one `upper_bound_<x>` column per atom
//! count `x` observed in the dataset (if enabled, `I_at` targets only).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datagen::Dataset;
use crate::learners::{Design, Heuristic};
use crate::logic::KnowledgeBase;
use crate::measures::Measure;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("formula `{0}` is not in the vocabulary")]
    UnknownFormula(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(entries: Vec<String>) -> Self {
        Vocabulary::from_entries(entries)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.entries
    }
}

impl Vocabulary {
    pub fn from_entries(entries: impl IntoIterator<Item = String>) -> Self {
        let mut v = Vocabulary::default();
        for e in entries {
            v.push(e);
        }
        v
    }

    fn push(&mut self, key: String) {
        if !self.index.contains_key(&key) {
            self.index.insert(key.clone(), self.entries.len());
            self.entries.push(key);
        }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Distinct canonical formula strings across `datasets`, in first-occurrence
/// order.
pub fn build_vocabulary<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> Vocabulary {
    let mut v = Vocabulary::default();
    for d in datasets {
        for inst in &d.instances {
            for key in inst.kb.keys() {
                v.push(key.clone());
            }
        }
    }
    v
}

/// Sound but incomplete consistency test: true when no atom occurs both
/// positively and negatively anywhere in `kb`.
pub fn consistency_flag(kb: &KnowledgeBase) -> bool {
    let mut pos = BTreeSet::new();
    let mut neg = BTreeSet::new();
    for f in kb {
        for l in f.literals() {
            if l.negated {
                if pos.contains(&l.atom) {
                    return false;
                }
                neg.insert(&l.atom);
            } else {
                if neg.contains(&l.atom) {
                    return false;
                }
                pos.insert(&l.atom);
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlagOptions {
    pub consistent: bool,
    pub upper_bound: bool,
}

impl FlagOptions {
    pub const NONE: FlagOptions = FlagOptions { consistent: false, upper_bound: false };

    /// Every flag family applicable to `target`.
    pub fn all_for(target: Measure) -> Self {
        FlagOptions { consistent: true, upper_bound: target == Measure::At }
    }
}

/// Which flag columns follow the formula bits, and where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSchema {
    pub vocab_len: usize,
    pub consistent: bool,
    /// Atom counts with an `upper_bound_<x>` column, ascending.
    pub upper_bound: Vec<usize>,
}

impl FlagSchema {
    pub fn none(vocab_len: usize) -> Self {
        FlagSchema { vocab_len, consistent: false, upper_bound: Vec::new() }
    }

    pub fn consistent_column(&self) -> Option<usize> {
        self.consistent.then_some(self.vocab_len)
    }

    pub fn upper_bound_columns(&self) -> Range<usize> {
        let start = self.vocab_len + self.consistent as usize;
        start..start + self.upper_bound.len()
    }

    pub fn width(&self) -> usize {
        self.upper_bound_columns().end
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.vocab_len).map(|j| format!("f{j}")).collect();
        if self.consistent {
            names.push("consistent".into());
        }
        names.extend(self.upper_bound.iter().map(|x| format!("upper_bound_{x}")));
        names
    }

    /// Flag families as loss-function heuristics over their columns.
    pub fn heuristics(&self) -> Vec<Heuristic> {
        let mut out = Vec::new();
        if let Some(c) = self.consistent_column() {
            out.push(Heuristic { name: "consistent".into(), columns: vec![c] });
        }
        if !self.upper_bound.is_empty() {
            out.push(Heuristic { name: "upper_bound".into(), columns: self.upper_bound_columns().collect() });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    /// Vocabulary positions of the formulas in the knowledge base, ascending.
    pub kb_bits: Vec<usize>,
    pub consistent: Option<bool>,
    /// Index into the schema's `upper_bound` list of the set bit, if any.
    pub upper_bound: Option<usize>,
}

impl FeatureVector {
    /// Every column holding a 1, ascending.
    pub fn active_columns(&self, schema: &FlagSchema) -> Vec<usize> {
        let mut cols = self.kb_bits.clone();
        if self.consistent == Some(true) {
            cols.push(schema.vocab_len);
        }
        if let Some(k) = self.upper_bound {
            cols.push(schema.upper_bound_columns().start + k);
        }
        cols
    }

    pub fn dense(&self, schema: &FlagSchema) -> Vec<u8> {
        let mut out = vec![0u8; schema.width()];
        for c in self.active_columns(schema) {
            out[c] = 1;
        }
        out
    }
}

pub fn encode_kb(kb: &KnowledgeBase, vocab: &Vocabulary, schema: &FlagSchema) -> Result<FeatureVector, EncodingError> {
    let mut kb_bits = kb
        .keys()
        .iter()
        .map(|k| vocab.position(k).ok_or_else(|| EncodingError::UnknownFormula(k.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    kb_bits.sort_unstable();
    let consistent = schema.consistent.then(|| consistency_flag(kb));
    let upper_bound = if schema.upper_bound.is_empty() {
        None
    } else {
        let x = kb.atoms().len();
        schema.upper_bound.iter().position(|&u| u == x)
    };
    Ok(FeatureVector { kb_bits, consistent, upper_bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub vocabulary: Vocabulary,
    pub schema: FlagSchema,
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<f64>,
    pub target: Measure,
}

/// Encodes `d` against `vocab` (or a vocabulary built over `d` itself).
///
/// The `upper_bound` family is only added for `I_at` targets.
pub fn encode_dataset(
    d: &Dataset,
    target: Measure,
    flags: FlagOptions,
    vocab: Option<Vocabulary>,
) -> Result<EncodedDataset, EncodingError> {
    let vocabulary = vocab.unwrap_or_else(|| build_vocabulary([d]));
    let upper_bound = if flags.upper_bound && target == Measure::At {
        d.instances.iter().map(|i| i.kb.atoms().len()).collect::<BTreeSet<_>>().into_iter().collect()
    } else {
        Vec::new()
    };
    let schema = FlagSchema { vocab_len: vocabulary.len(), consistent: flags.consistent, upper_bound };
    let rows = d.instances.iter().map(|i| encode_kb(&i.kb, &vocabulary, &schema)).collect::<Result<Vec<_>, _>>()?;
    let labels = d.instances.iter().map(|i| i.label(target) as f64).collect();
    Ok(EncodedDataset { vocabulary, schema, rows, labels, target })
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn design(&self) -> Design {
        self.design_of(0..self.rows.len())
    }

    /// Sparse design matrix of the selected rows.
    pub fn design_of(&self, rows: impl IntoIterator<Item = usize>) -> Design {
        let rows = rows
            .into_iter()
            .map(|i| self.rows[i].active_columns(&self.schema).into_iter().map(|c| (c, 1.0)).collect())
            .collect();
        Design::from_sparse(self.width(), rows)
    }

    pub fn labels_of(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn dense_matrix(&self) -> DMatrix<f64> {
        self.design().to_dense()
    }

    /// Column sum of the `consistent` flag, if present.
    pub fn flagged_count(&self) -> Option<usize> {
        self.schema.consistent.then(|| self.rows.iter().filter(|r| r.consistent == Some(true)).count())
    }

    /// Hash identifying the vocabulary and column layout.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.vocabulary, &self.schema)
    }

    /// Writes the rows as CSV plus a `<path>.columns.json` sidecar mapping
    /// `f<j>` column names to formulas.
    pub fn write_csv(&self, path: &Path) -> Result<(), EncodingError> {
        let io_err = |p: &Path| {
            let p = p.to_path_buf();
            move |source| EncodingError::Io { path: p, source }
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        let mut header = self.schema.column_names().join(",");
        header.push_str(",label");
        writeln!(w, "{header}").map_err(io_err(path))?;
        let mut line = String::new();
        for (row, label) in self.rows.iter().zip(&self.labels) {
            line.clear();
            for bit in row.dense(&self.schema) {
                line.push(if bit == 1 { '1' } else { '0' });
                line.push(',');
            }
            write!(line, "{label}").unwrap();
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;

        let sidecar = columns_path(path);
        let formulas: serde_json::Map<String, serde_json::Value> =
            self.vocabulary.entries().iter().enumerate().map(|(j, f)| (format!("f{j}"), f.clone().into())).collect();
        let doc = serde_json::json!({
            "target": self.target,
            "formulas": formulas,
            "schema": self.schema,
            "fingerprint": self.fingerprint(),
        });
        fs::write(&sidecar, serde_json::to_string_pretty(&doc).unwrap() + "\n").map_err(io_err(&sidecar))?;
        Ok(())
    }
}

pub fn columns_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".columns.json");
    PathBuf::from(name)
}

pub fn fingerprint(vocab: &Vocabulary, schema: &FlagSchema) -> String {
    let mut h = Sha256::new();
    for e in vocab.entries() {
        h.update(e.as_bytes());
        h.update(b"\n");
    }
    h.update(serde_json::to_string(schema).unwrap().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
