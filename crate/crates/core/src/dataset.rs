//! JSONL files exchanged between pipeline stages.
//!
//! A file may start with a provenance line `{"_provenance": {...}}`; readers
//! return it separately and never treat it as a record.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::parse_penman;
use crate::grounding::{BBox, VgAmr};
use crate::sampler::{SampleKind, SampledSubgraph};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid graph record: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(stage: &str, config_hash: &str, seed: u64) -> Self {
        Provenance {
            tool: "ssa".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            stage: stage.into(),
            config_hash: config_hash.into(),
            seed,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(rename = "_provenance")]
    provenance: Provenance,
}

pub fn write_jsonl<T: Serialize>(
    path: impl AsRef<Path>,
    provenance: Option<&Provenance>,
    records: &[T],
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |error| DatasetError::Io { path: path.to_path_buf(), error };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    if let Some(p) = provenance {
        write_line(&mut w, &Header { provenance: p.clone() }, path)?;
    }
    for r in records {
        write_line(&mut w, r, path)?;
    }
    w.flush().map_err(io_err)
}

fn write_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<(), DatasetError> {
    serde_json::to_writer(&mut *w, value)
        .map_err(|e| DatasetError::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() })?;
    w.write_all(b"\n").map_err(|error| DatasetError::Io { path: path.to_path_buf(), error })
}

/// Reads records, skipping blank lines and a leading provenance line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(Option<Provenance>, Vec<T>), DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|error| DatasetError::Io { path: path.to_path_buf(), error })?;
    parse_jsonl(BufReader::new(file), path)
}

pub fn parse_jsonl<T: DeserializeOwned>(
    reader: impl BufRead,
    path: &Path,
) -> Result<(Option<Provenance>, Vec<T>), DatasetError> {
    let mut provenance = None;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|error| DatasetError::Io { path: path.to_path_buf(), error })?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Parse { path: path.to_path_buf(), line: i + 1, message };
        if out.is_empty() && provenance.is_none() && t.starts_with("{\"_provenance\"") {
            let h: Header = serde_json::from_str(t).map_err(|e| err(e.to_string()))?;
            provenance = Some(h.provenance);
            continue;
        }
        out.push(serde_json::from_str(t).map_err(|e| err(e.to_string()))?);
    }
    Ok((provenance, out))
}

/// Serialized form of a grounded graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub penman: String,
    pub grounding: BTreeMap<String, Vec<BBox>>,
    pub synonyms: BTreeMap<String, Vec<String>>,
}

impl GraphRecord {
    pub fn from_vgamr(g: &VgAmr) -> Self {
        GraphRecord {
            penman: g.graph.to_penman(),
            grounding: g.grounding.iter().map(|(k, v)| (k.clone(), v.iter().copied().collect())).collect(),
            synonyms: g.synonyms.clone(),
        }
    }

    pub fn to_vgamr(&self) -> Result<VgAmr, DatasetError> {
        let graph = parse_penman(&self.penman).map_err(|e| DatasetError::Invalid(e.to_string()))?;
        let mut g = VgAmr::ungrounded(graph);
        g.grounding = self
            .grounding
            .iter()
            .filter(|(_, b)| !b.is_empty())
            .map(|(k, v)| (k.clone(), v.iter().copied().collect()))
            .collect();
        for (k, list) in &self.synonyms {
            if g.graph.contains(k) && !list.is_empty() {
                g.synonyms.insert(k.clone(), list.clone());
            }
        }
        g.check().map_err(DatasetError::Invalid)?;
        Ok(g)
    }
}

/// One line of `meta.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub image_id: String,
    pub image_width: f64,
    pub image_height: f64,
    #[serde(flatten)]
    pub graph: GraphRecord,
    /// Number of captions merged into this graph.
    pub captions: usize,
}

/// One line of `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub image_id: String,
    pub image_width: f64,
    pub image_height: f64,
    pub origin_predicate: String,
    pub kind: SampleKind,
    #[serde(flatten)]
    pub graph: GraphRecord,
}

impl SampleRecord {
    pub fn new(image_id: &str, width: f64, height: f64, s: &SampledSubgraph) -> Self {
        SampleRecord {
            image_id: image_id.into(),
            image_width: width,
            image_height: height,
            origin_predicate: s.origin_predicate.clone(),
            kind: s.kind,
            graph: GraphRecord::from_vgamr(&s.graph),
        }
    }
}
