//! Where each artifact lives under the run directory, and how it is read
//! and written.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use walk2kg_core::graph::EdgeSplit;
use walk2kg_core::{AttentionParams64, EmbeddingMatrix64, KgModel64};

use crate::error::{CliError, Result};
use crate::manifest::write_atomic;

/// Which part of the dataset partition a graph belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// One community graph with its held-out edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub id: usize,
    pub split: Split,
    pub community: Option<u64>,
    pub holdout_seed: u64,
    pub edges: EdgeSplit,
}

impl GraphRecord {
    pub fn node_count(&self) -> usize {
        self.edges.train_graph.node_count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: usize,
    pub split: Split,
    pub nodes: usize,
    pub train_edges: usize,
    pub held_out_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphIndex {
    pub bucket: String,
    pub dataset: String,
    pub skipped_members: usize,
    pub graphs: Vec<IndexEntry>,
}

impl GraphIndex {
    pub fn ids(&self, split: Split) -> Vec<usize> {
        self.graphs.iter().filter(|g| g.split == split).map(|g| g.id).collect()
    }
}

/// One row of a per-graph timing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub graph_id: usize,
    pub nodes: usize,
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
}

/// Path helpers rooted at the run directory. All returned paths are
/// relative so the manifest stays valid when the directory moves.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

pub fn graph_file(id: usize) -> String {
    format!("g{id:05}")
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn abs(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn graph_index(bucket: &str) -> PathBuf {
        PathBuf::from("graphs").join(bucket).join("index.json")
    }

    pub fn graph(bucket: &str, id: usize) -> PathBuf {
        PathBuf::from("graphs").join(bucket).join(format!("{}.json", graph_file(id)))
    }

    /// `family` is e.g. `source-node2vec` or `finetuned-node2vec-transe`.
    pub fn embedding(bucket: &str, family: &str, id: usize, ext: &str) -> PathBuf {
        PathBuf::from("embeddings").join(bucket).join(family).join(format!("{}.{ext}", graph_file(id)))
    }

    pub fn model(scope: &str, pair: &str, suffix: &str) -> PathBuf {
        PathBuf::from("models").join(scope).join(format!("{pair}{suffix}"))
    }

    pub fn timing(bucket: &str, family: &str) -> PathBuf {
        PathBuf::from("timings").join(bucket).join(format!("{family}.csv"))
    }

    pub fn report(bucket: &str, name: &str) -> PathBuf {
        PathBuf::from("reports").join(bucket).join(name)
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &Path) -> Result<T> {
        let p = self.abs(rel);
        let f = fs::File::open(&p).map_err(|_| CliError::missing(&p, "prepare"))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, rel: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        write_atomic(&self.abs(rel), text.as_bytes())
    }

    pub fn write_embedding(&self, rel: &Path, e: &EmbeddingMatrix64) -> Result<()> {
        let mut buf = Vec::new();
        e.write_binary(&mut buf)?;
        write_atomic(&self.abs(rel), &buf)
    }

    pub fn read_embedding(&self, rel: &Path, stage: &str) -> Result<EmbeddingMatrix64> {
        let p = self.abs(rel);
        let f = fs::File::open(&p).map_err(|_| CliError::missing(&p, stage))?;
        Ok(EmbeddingMatrix64::read_binary(BufReader::new(f))?)
    }

    pub fn write_kg(&self, rel: &Path, m: &KgModel64) -> Result<()> {
        let mut buf = Vec::new();
        m.write_binary(&mut buf)?;
        write_atomic(&self.abs(rel), &buf)
    }

    pub fn read_kg(&self, rel: &Path) -> Result<KgModel64> {
        let p = self.abs(rel);
        let f = fs::File::open(&p).map_err(|_| CliError::missing(&p, "train-kg"))?;
        Ok(KgModel64::read_binary(BufReader::new(f))?)
    }

    pub fn write_params(&self, rel: &Path, theta: &AttentionParams64) -> Result<()> {
        let mut buf = Vec::new();
        theta.write_binary(&mut buf)?;
        write_atomic(&self.abs(rel), &buf)
    }

    pub fn write_csv<T: Serialize>(&self, rel: &Path, rows: &[T]) -> Result<()> {
        write_atomic(&self.abs(rel), &csv_bytes(rows)?)
    }

    pub fn read_csv<T: DeserializeOwned>(&self, rel: &Path, stage: &str) -> Result<Vec<T>> {
        let p = self.abs(rel);
        let f = fs::File::open(&p).map_err(|_| CliError::missing(&p, stage))?;
        csv::Reader::from_reader(f)
            .deserialize()
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }

    pub fn read_timings(&self, rel: &Path, stage: &str) -> Result<BTreeMap<usize, TimingRow>> {
        Ok(self
            .read_csv::<TimingRow>(rel, stage)?
            .into_iter()
            .map(|r| (r.graph_id, r))
            .collect())
    }
}

pub fn read_params(path: &Path) -> Result<AttentionParams64> {
    let f = fs::File::open(path).map_err(|_| CliError::missing(path, "train-transform"))?;
    Ok(AttentionParams64::read_binary(BufReader::new(f))?)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}
