//! JSON Lines dataset files.
//!
//! One instance per line: `{"kb": ["a | !b", "c"], "i_mi": 0, "i_at": 0}`.
//! The generator configuration goes to a sidecar `<file>.meta.json`; when the
//! sidecar is missing the configuration is inferred from the instances.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dataset, GenConfig, LabeledInstance};
use crate::logic::{parse_formula, KnowledgeBase, ParseError};
use crate::measures::{measure_kb, MeasureError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}, formula {index}: {source}")]
    Formula {
        line: usize,
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("line {line}: stored {field}={stored} but recomputed {computed}")]
    LabelMismatch { line: usize, field: &'static str, stored: usize, computed: usize },
    #[error("line {line}: {source}")]
    Measure {
        line: usize,
        #[source]
        source: MeasureError,
    },
    #[error("{path}: invalid metadata: {message}")]
    Meta { path: PathBuf, message: String },
}

#[derive(Serialize)]
struct RecordOut<'a> {
    kb: &'a [String],
    i_mi: usize,
    i_at: usize,
}

#[derive(Deserialize)]
struct RecordIn {
    kb: Option<Vec<String>>,
    i_mi: Option<usize>,
    i_at: Option<usize>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for inst in &d.instances {
        let rec = RecordOut { kb: inst.kb.keys(), i_mi: inst.label_mi, i_at: inst.label_at };
        let line = serde_json::to_string(&rec).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    let meta = meta_path(path);
    let text = serde_json::to_string_pretty(&d.config).expect("config serializes");
    fs::write(&meta, text + "\n").map_err(io_err(&meta))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    load(path, false)
}

/// Loads and recomputes both labels of every instance, failing on the first
/// mismatch.
pub fn load_dataset_verified(path: &Path) -> Result<Dataset, DatasetError> {
    load(path, true)
}

fn load(path: &Path, verify: bool) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut instances = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        instances.push(parse_record(&line, line_no, verify)?);
    }
    let meta = meta_path(path);
    let config = if meta.exists() {
        let text = fs::read_to_string(&meta).map_err(io_err(&meta))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Meta { path: meta.clone(), message: e.to_string() })?
    } else {
        infer_config(&instances)
    };
    Ok(Dataset { config, instances })
}

fn parse_record(line: &str, line_no: usize, verify: bool) -> Result<LabeledInstance, DatasetError> {
    let schema = |message: String| DatasetError::Schema { line: line_no, message };
    let rec: RecordIn = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
    let texts = rec.kb.ok_or_else(|| schema("missing field \"kb\"".into()))?;
    let label_mi = rec.i_mi.ok_or_else(|| schema("missing field \"i_mi\"".into()))?;
    let label_at = rec.i_at.ok_or_else(|| schema("missing field \"i_at\"".into()))?;
    let mut kb = KnowledgeBase::new();
    for (index, text) in texts.iter().enumerate() {
        let f = parse_formula(text).map_err(|source| DatasetError::Formula { line: line_no, index, source })?;
        if !kb.insert(f) {
            return Err(schema(format!("duplicate formula {text:?}")));
        }
    }
    if verify {
        let (mi, at) = measure_kb(&kb).map_err(|source| DatasetError::Measure { line: line_no, source })?;
        if mi != label_mi {
            return Err(DatasetError::LabelMismatch { line: line_no, field: "i_mi", stored: label_mi, computed: mi });
        }
        if at != label_at {
            return Err(DatasetError::LabelMismatch { line: line_no, field: "i_at", stored: label_at, computed: at });
        }
    }
    Ok(LabeledInstance { kb, label_mi, label_at })
}

fn infer_config(instances: &[LabeledInstance]) -> GenConfig {
    let atoms = instances.iter().flat_map(|i| i.kb.atoms()).collect::<std::collections::BTreeSet<_>>();
    GenConfig {
        atom_pool: atoms.len().max(1),
        max_formulas: instances.iter().map(|i| i.kb.len()).max().unwrap_or(1).max(1),
        max_literal_occurrences: instances
            .iter()
            .flat_map(|i| i.kb.iter().map(|f| f.literal_count()))
            .max()
            .unwrap_or(1),
        n_instances: instances.len(),
        seed: 0,
    }
}
