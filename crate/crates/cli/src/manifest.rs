//! Run manifest: which stages ran, with which configuration and seeds, and
//! which files they produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A file written by a stage, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: PathBuf,
    /// False for files holding timings, which differ between runs.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Bucket directory name, or `pooled`.
    pub bucket: String,
    /// Source/target combination for stages that depend on it.
    pub variant: Option<String>,
    /// Hash of every configuration value this stage and its inputs depend on.
    pub fingerprint: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    /// Graph ids whose upstream artifacts this stage read, by split.
    pub inputs: BTreeMap<String, Vec<usize>>,
    pub artifacts: Vec<ArtifactRef>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl StageRecord {
    pub fn key(&self) -> (&str, &str, Option<&str>) {
        (&self.stage, &self.bucket, self.variant.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub root_seed: u64,
    pub config: PipelineConfig,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub stages: Vec<StageRecord>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(config: &PipelineConfig) -> Self {
        let now = unix_now();
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            root_seed: config.seed,
            config: config.clone(),
            created_unix: now,
            updated_unix: now,
            stages: Vec::new(),
        }
    }

    /// Loads `dir/manifest.json`, or starts a fresh manifest when absent.
    pub fn load_or_new(dir: &Path, config: &PipelineConfig) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(config));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let mut m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        m.config = config.clone();
        m.root_seed = config.seed;
        Ok(m)
    }

    pub fn find(&self, stage: &str, bucket: &str, variant: Option<&str>) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.key() == (stage, bucket, variant))
    }

    /// Replaces any earlier record with the same key.
    pub fn record(&mut self, rec: StageRecord) {
        self.stages.retain(|r| r.key() != rec.key());
        self.stages.push(rec);
        self.updated_unix = unix_now();
    }

    /// Looks up the record an upstream stage must have left, checking that it
    /// was produced under the current configuration and that its files exist.
    pub fn require(
        &self,
        dir: &Path,
        stage: &str,
        bucket: &str,
        variant: Option<&str>,
        expected_fingerprint: &str,
    ) -> Result<&StageRecord> {
        let what = match variant {
            Some(v) => format!("{stage} ({bucket}, {v})"),
            None => format!("{stage} ({bucket})"),
        };
        let rec = self.find(stage, bucket, variant).ok_or_else(|| CliError::MissingArtifact {
            path: dir.join(MANIFEST_FILE),
            remedy: format!("no record of {what}; run `walk2kg {stage}` with the same configuration first"),
        })?;
        if rec.fingerprint != expected_fingerprint {
            return Err(CliError::Stale {
                stage: stage.to_string(),
                remedy: format!("{what} ran under a different configuration; rerun `walk2kg {stage}` and later stages"),
            });
        }
        for a in &rec.artifacts {
            if !dir.join(&a.path).exists() {
                return Err(CliError::missing(dir.join(&a.path), stage));
            }
        }
        Ok(rec)
    }

    /// Writes the manifest. Records whose artifacts no longer all exist are
    /// dropped first, so every path the written manifest lists is present.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.stages.retain(|rec| {
            let missing = rec.artifacts.iter().find(|a| !dir.join(&a.path).exists());
            if let Some(a) = missing {
                log::warn!("dropping {} record for {}: {} is missing", rec.stage, rec.bucket, a.path.display());
            }
            missing.is_none()
        });
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        write_atomic(&path, text.as_bytes())
    }
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// FNV-1a over the canonical JSON of `parts`, as 16 hex digits.
pub fn fingerprint<S: AsRef<str>>(parts: &[(S, Value)]) -> String {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for (name, value) in parts {
        let text = format!("{}={value};", name.as_ref());
        for b in text.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(stage: &str, fp: &str, artifact: &str) -> StageRecord {
        StageRecord {
            stage: stage.into(),
            bucket: "b16-21".into(),
            variant: None,
            fingerprint: fp.into(),
            config: Value::Null,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            artifacts: vec![ArtifactRef { path: artifact.into(), deterministic: true }],
            started_unix: 0,
            finished_unix: 0,
        }
    }

    #[test]
    fn require_detects_missing_stale_and_deleted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "x").unwrap();
        let mut m = RunManifest::new(&PipelineConfig::default());
        assert_eq!(m.require(dir.path(), "prepare", "b16-21", None, "f").unwrap_err().exit_code(), 3);
        m.record(record("prepare", "f", "a.txt"));
        m.record(record("prepare", "f", "a.txt"));
        assert_eq!(m.stages.len(), 1);
        m.require(dir.path(), "prepare", "b16-21", None, "f").unwrap();
        assert!(matches!(m.require(dir.path(), "prepare", "b16-21", None, "g"), Err(CliError::Stale { .. })));
        m.save(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("a.txt")).unwrap();
        assert_eq!(m.require(dir.path(), "prepare", "b16-21", None, "f").unwrap_err().exit_code(), 3);
        m.save(dir.path()).unwrap();
        assert!(m.stages.is_empty());
    }

    #[test]
    fn fingerprint_is_order_and_value_sensitive() {
        let a = fingerprint(&[("x", Value::from(1)), ("y", Value::from(2))]);
        assert_eq!(a, fingerprint(&[("x", Value::from(1)), ("y", Value::from(2))]));
        assert_ne!(a, fingerprint(&[("y", Value::from(2)), ("x", Value::from(1))]));
        assert_ne!(a, fingerprint(&[("x", Value::from(1)), ("y", Value::from(3))]));
    }
}
