//! Pipeline configuration: a JSON document whose every field can be
//! overridden from the command line by its dotted path.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use walk2kg_core::graph::synthetic::PlantedPartitionConfig;
use walk2kg_core::kg::{KgModelKind, KgTrainConfig};
use walk2kg_core::seed::SeedSplitter;
use walk2kg_core::transform::TransformTrainConfig;
use walk2kg_core::walk::{SkipGramConfig, SourceMethod, WalkConfig};

use crate::error::{CliError, Result};

/// Inclusive node-count range, written `MIN-MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SizeBucket {
    pub min: usize,
    pub max: usize,
}

impl SizeBucket {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min < 2 || min > max {
            return Err(CliError::Config(format!("invalid size bucket {min}-{max}")));
        }
        Ok(Self { min, max })
    }

    /// Directory name used for this bucket's artifacts.
    pub fn dir_name(&self) -> String {
        format!("b{}-{}", self.min, self.max)
    }
}

impl fmt::Display for SizeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.min, self.max)
    }
}

impl FromStr for SizeBucket {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("size bucket must look like MIN-MAX, got {s:?}"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let min = a.trim().parse().map_err(|_| bad())?;
        let max = b.trim().parse().map_err(|_| bad())?;
        SizeBucket::new(min, max)
    }
}

impl Serialize for SizeBucket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SizeBucket {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Label written to the `dataset` column of reports.
    pub name: String,
    /// Generate planted-partition graphs instead of reading files.
    pub synthetic: bool,
    /// SNAP-style undirected edge list.
    pub edges: Option<PathBuf>,
    /// One community per line, whitespace-separated member ids.
    pub communities: Option<PathBuf>,
    pub generator: PlantedPartitionConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            synthetic: true,
            edges: None,
            communities: None,
            generator: PlantedPartitionConfig::default(),
        }
    }
}

/// Everything a run depends on. Seed fields inside the stage sections are
/// replaced by sub-seeds derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    pub size_buckets: Vec<SizeBucket>,
    pub holdout_fraction: f64,
    pub split_ratios: [f64; 3],
    pub dim: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub source: SourceMethod,
    pub walk: WalkConfig,
    pub skipgram: SkipGramConfig,
    pub target: KgModelKind,
    pub kg: KgTrainConfig,
    pub transform: TransformTrainConfig,
    /// Train one transformation model over all buckets instead of one each.
    pub pool_buckets: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            size_buckets: vec![SizeBucket { min: 16, max: 21 }],
            holdout_fraction: 0.2,
            split_ratios: [0.64, 0.16, 0.20],
            dim: 32,
            seed: 0,
            out: PathBuf::from("runs/default"),
            jobs: 1,
            source: SourceMethod::Node2Vec,
            walk: WalkConfig::default(),
            skipgram: SkipGramConfig::default(),
            target: KgModelKind::TransE,
            kg: KgTrainConfig::default(),
            transform: TransformTrainConfig::default(),
            pool_buckets: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CliError::Config(m));
        if self.size_buckets.is_empty() {
            return err("at least one size bucket is required".into());
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return err(format!("holdout_fraction must lie in [0, 1), got {}", self.holdout_fraction));
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split_ratios.iter().any(|r| *r < 0.0) {
            return err(format!("split_ratios must be non-negative and sum to 1, got {:?}", self.split_ratios));
        }
        if self.dim < 1 {
            return err("dim must be at least 1".into());
        }
        if self.jobs < 1 {
            return err("jobs must be at least 1".into());
        }
        if !self.dataset.synthetic && (self.dataset.edges.is_none() || self.dataset.communities.is_none()) {
            return err("dataset.edges and dataset.communities are required unless dataset.synthetic is set".into());
        }
        self.walk_config(0).validate()?;
        self.skipgram_config(0).validate()?;
        self.kg_config(0, 0).validate()?;
        self.transform_config(0).validate()?;
        Ok(())
    }

    pub fn seeds(&self) -> SeedSplitter {
        SeedSplitter::new(self.seed)
    }

    pub fn walk_config(&self, seed: u64) -> WalkConfig {
        WalkConfig { seed, ..self.source.walk_config(self.walk) }
    }

    pub fn skipgram_config(&self, seed: u64) -> SkipGramConfig {
        SkipGramConfig { dim: self.dim, seed, ..self.skipgram }
    }

    pub fn kg_config(&self, seed: u64, relation_seed: u64) -> KgTrainConfig {
        KgTrainConfig { seed, relation_seed: Some(relation_seed), ..self.kg }
    }

    pub fn transform_config(&self, seed: u64) -> TransformTrainConfig {
        TransformTrainConfig { seed, ..self.transform.clone() }
    }

    /// `<source>-<target>`, the pair a transformation model maps between.
    pub fn pair_name(&self) -> String {
        format!("{}-{}", self.source.as_str(), self.target.as_str())
    }
}

/// Command-line settings layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `(dotted.path, raw value)` in command-line order.
    pub dotted: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub synthetic: bool,
    pub size_buckets: Vec<SizeBucket>,
    pub source: Option<SourceMethod>,
    pub target: Option<KgModelKind>,
    pub out: Option<PathBuf>,
}

/// Splits `--some.dotted.key VALUE` and `--some.dotted.key=VALUE` out of
/// `args`, returning the remaining arguments and the pairs found.
pub fn extract_dotted(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut pairs = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--").filter(|k| k.contains('.')) else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?;
                (key.to_string(), v)
            }
        };
        pairs.push((key, value));
    }
    Ok((rest, pairs))
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("--{path}: {} is not a section", parts[..i].join("."))))?;
        node = obj
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("--{path}: unknown configuration key")))?;
    }
    *node = parse_value(raw);
    Ok(())
}

fn from_value(v: Value) -> Result<PipelineConfig> {
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}

/// Defaults, then the config file, then dotted overrides, then named flags.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<PipelineConfig> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<PipelineConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    let mut value = serde_json::to_value(&base).map_err(|e| CliError::Config(e.to_string()))?;
    for (key, raw) in &overrides.dotted {
        set_path(&mut value, key, raw)?;
    }
    let mut cfg = from_value(value)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = overrides.jobs {
        cfg.jobs = jobs;
    }
    if overrides.synthetic {
        cfg.dataset.synthetic = true;
    }
    if !overrides.size_buckets.is_empty() {
        cfg.size_buckets = overrides.size_buckets.clone();
    }
    if let Some(s) = overrides.source {
        cfg.source = s;
    }
    if let Some(t) = overrides.target {
        cfg.target = t;
    }
    if let Some(o) = &overrides.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), cfg);
        assert!(json.contains("\"16-21\""));
    }

    #[test]
    fn dotted_overrides_are_extracted() {
        let args = ["walk2kg", "embed", "--kg.epochs", "7", "--seed", "3", "--transform.learning_rate=0.5"];
        let (rest, pairs) = extract_dotted(args.iter().map(|s| s.to_string()).collect()).unwrap();
        assert_eq!(rest, ["walk2kg", "embed", "--seed", "3"]);
        assert_eq!(pairs, [("kg.epochs".into(), "7".into()), ("transform.learning_rate".into(), "0.5".into())]);
        assert!(extract_dotted(vec!["--kg.epochs".into()]).is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let o = Overrides {
            dotted: vec![
                ("kg.epochs".into(), "7".into()),
                ("dataset.name".into(), "dblp".into()),
                ("seed".into(), "5".into()),
            ],
            seed: Some(9),
            size_buckets: vec!["51-55".parse().unwrap()],
            ..Overrides::default()
        };
        let cfg = load(None, &o).unwrap();
        assert_eq!(cfg.kg.epochs, 7);
        assert_eq!(cfg.dataset.name, "dblp");
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.size_buckets, [SizeBucket { min: 51, max: 55 }]);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for (k, v) in [("kg.nope", "1"), ("kg.epochs", "many"), ("holdout_fraction", "1.5"), ("split_ratios", "[0.5,0.5,0.5]")] {
            let o = Overrides { dotted: vec![(k.into(), v.into())], ..Overrides::default() };
            assert_eq!(load(None, &o).unwrap_err().exit_code(), 2, "{k}");
        }
    }

    #[test]
    fn bucket_parsing() {
        assert_eq!("16-21".parse::<SizeBucket>().unwrap(), SizeBucket { min: 16, max: 21 });
        assert!("21-16".parse::<SizeBucket>().is_err());
        assert!("abc".parse::<SizeBucket>().is_err());
    }
}
