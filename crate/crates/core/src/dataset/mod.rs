//! Portable dataset model and its line-delimited file format.
//!
//! Each non-blank line is one JSON object:
//!
//! ```text
//! {"id": "img/0001.jpg", "features": [0.12, 3.4, ...], "captions": ["a crane", "a truck"]}
//! ```
//!
//! An optional first line of the form `{"metadata": {"source": "..."}}` carries
//! free-form string metadata (extractor, captioner, provenance).

pub mod text;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on regional captions per image.
pub const MAX_CAPTIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub features: Vec<f64>,
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ImageRecord>,
    feature_dim: usize,
    metadata: BTreeMap<String, String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    metadata: &'a BTreeMap<String, String>,
}

impl Dataset {
    /// Validates records and builds the id index.
    pub fn new(records: Vec<ImageRecord>, metadata: BTreeMap<String, String>) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::Validation("empty dataset".into()));
        };
        let feature_dim = first.features.len();
        if feature_dim == 0 {
            return Err(Error::Validation(format!(
                "record {:?} has an empty feature vector",
                first.id
            )));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            validate_record(rec, feature_dim)?;
            if index.insert(rec.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate id {:?}", rec.id)));
            }
        }
        Ok(Self {
            records,
            feature_dim,
            metadata,
            index,
        })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// Record ids in lexicographic order.
    pub fn sorted_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    /// Number of images per caption count, keyed by caption count.
    pub fn caption_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for r in &self.records {
            *hist.entry(r.captions.len()).or_insert(0) += 1;
        }
        hist
    }
}

fn validate_record(rec: &ImageRecord, feature_dim: usize) -> Result<()> {
    if rec.id.is_empty() {
        return Err(Error::Validation("record with empty id".into()));
    }
    if rec.features.len() != feature_dim {
        return Err(Error::Validation(format!(
            "dimension mismatch for id {:?}: expected {feature_dim}, got {}",
            rec.id,
            rec.features.len()
        )));
    }
    if rec.captions.is_empty() {
        return Err(Error::Validation(format!(
            "id {:?} has no captions",
            rec.id
        )));
    }
    if rec.captions.len() > MAX_CAPTIONS {
        return Err(Error::Validation(format!(
            "id {:?} has {} captions (max {MAX_CAPTIONS})",
            rec.id,
            rec.captions.len()
        )));
    }
    if let Some(pos) = rec.captions.iter().position(|c| c.trim().is_empty()) {
        return Err(Error::Validation(format!(
            "id {:?} caption {pos} is blank",
            rec.id
        )));
    }
    Ok(())
}

/// Reads and validates a dataset file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    })
}

pub fn read_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut metadata = BTreeMap::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut feature_dim = None;
    for (no, line) in reader.lines().enumerate() {
        let line_no = no + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: line_no,
            message: e.to_string(),
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(parse_err)?;
        let is_header = value.get("metadata").is_some() && value.get("id").is_none();
        match is_header {
            true if records.is_empty() => {
                metadata = serde_json::from_value(value["metadata"].clone()).map_err(parse_err)?;
            }
            true => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "metadata line must precede all records".into(),
                })
            }
            false => {
                let rec: ImageRecord = serde_json::from_value(value).map_err(parse_err)?;
                let dim = *feature_dim.get_or_insert(rec.features.len());
                validate_record(&rec, dim).map_err(|e| line_context(e, line_no))?;
                if !seen.insert(rec.id.clone()) {
                    return Err(line_context(
                        Error::Validation(format!("duplicate id {:?}", rec.id)),
                        line_no,
                    ));
                }
                records.push(rec);
            }
        }
    }
    Dataset::new(records, metadata)
}

fn line_context(e: Error, line: usize) -> Error {
    match e {
        Error::Validation(msg) => Error::Validation(format!("line {line}: {msg}")),
        e => e,
    }
}

pub fn write_dataset(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<dataset>", e);
    if !dataset.metadata.is_empty() {
        let header = serde_json::to_string(&HeaderOut {
            metadata: &dataset.metadata,
        })
        .expect("metadata serializes");
        writeln!(out, "{header}").map_err(io)?;
    }
    for rec in &dataset.records {
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf)?;
    crate::io::write_atomic(path, &buf)
}

/// The text embedded for one image: its regional captions joined with `"; "`.
pub fn image_caption_document(record: &ImageRecord) -> String {
    record.captions.join("; ")
}
