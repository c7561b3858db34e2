//! The experimental pipeline, one method per subcommand.
//!
//! Every stage reads its inputs through the manifest, so running a stage
//! whose upstream is missing or was produced under another configuration
//! fails with the name of the stage to rerun.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use walk2kg_core::eval::{
    anova_one_way, evaluate_link_prediction, time_stage, time_stage_thread, MetricsReport, MetricsRow, Scorer,
    StageTiming,
};
use walk2kg_core::graph::synthetic::generate_dataset;
use walk2kg_core::graph::{load_communities, load_edge_list, split_dataset, split_edges, GraphDataset};
use walk2kg_core::kg::{self, KgInit};
use walk2kg_core::transform::{apply, train_transformer, EpochLoss};
use walk2kg_core::{walk, EmbeddingMatrix64, Graph, KgModel64, TrainPair64};

use crate::config::{PipelineConfig, SizeBucket};
use crate::error::{CliError, Result};
use crate::layout::{read_params, GraphIndex, GraphRecord, IndexEntry, Layout, Split, TimingRow};
use crate::manifest::{fingerprint, unix_now, ArtifactRef, RunManifest, StageRecord};

pub const STAGES: [&str; 8] = ["prepare", "embed", "train-kg", "train-transform", "apply", "evaluate", "bench", "report"];

type Parts = Vec<(String, Value)>;

fn json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration values serialize")
}

fn part(name: &str, v: impl Serialize) -> (String, Value) {
    (name.to_string(), json(&v))
}

fn snapshot(parts: &Parts) -> Value {
    Value::Object(parts.iter().cloned().collect::<Map<String, Value>>())
}

/// Loss curve row written next to a trained transformation model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

impl From<&EpochLoss> for HistoryRow {
    fn from(e: &EpochLoss) -> Self {
        Self { epoch: e.epoch, train_loss: e.train_loss, val_loss: e.val_loss }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSummary {
    pub best_epoch: usize,
    pub best_loss: f64,
    pub diverged: bool,
    pub epochs_run: usize,
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    pub train_graphs: usize,
    pub validation_graphs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub size_bucket: String,
    pub group1: String,
    pub group2: String,
    pub n1: usize,
    pub n2: usize,
    pub mean1: f64,
    pub mean2: f64,
    pub mean_difference: f64,
    pub f_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetricsRecord {
    method: String,
    graph_id: usize,
    nodes: usize,
    report: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetricsDocument {
    dataset: String,
    size_bucket: String,
    /// Both endpoints of every held-out edge are ranked.
    query_directions: String,
    filtered: bool,
    records: Vec<MetricsRecord>,
}

/// Per-graph timings of the two ways of obtaining KG-space embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size_bucket: String,
    pub pair: String,
    pub graph_id: usize,
    pub nodes: usize,
    pub source_cpu: f64,
    pub kg_cpu: f64,
    pub forward_cpu: f64,
    pub finetune_path_cpu: f64,
    pub transform_path_cpu: f64,
    pub finetune_path_wall: f64,
    pub transform_path_wall: f64,
    pub finetuned_mrr: f64,
    pub transformed_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummaryRow {
    pub size_bucket: String,
    pub pair: String,
    pub graphs: usize,
    pub mean_nodes: f64,
    pub mean_source_cpu: f64,
    pub mean_kg_cpu: f64,
    pub mean_forward_cpu: f64,
    pub mean_finetune_path_cpu: f64,
    pub mean_transform_path_cpu: f64,
    pub mean_finetuned_mrr: f64,
    pub mean_transformed_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub size_bucket: String,
    pub method: String,
    pub graphs: usize,
    pub mean_mrr: f64,
    pub sd_mrr: f64,
    pub mean_p_at_1: f64,
    pub mean_p_at_3: f64,
    pub mean_p_at_10: f64,
    pub mean_cpu_seconds: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { f64::NAN } else { sum / n as f64 }
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn timing_row(id: usize, nodes: usize, t: &StageTiming) -> TimingRow {
    TimingRow { graph_id: id, nodes, cpu_seconds: t.cpu_seconds, wall_seconds: t.wall_seconds }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    layout: Layout,
    manifest: RunManifest,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
        let manifest = RunManifest::load_or_new(&cfg.out, &cfg)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
        Ok(Self { layout: Layout::new(&cfg.out), cfg, manifest, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Runs every stage over every configured bucket.
    pub fn run_all(&mut self) -> Result<Vec<SummaryRow>> {
        for stage in &STAGES[..STAGES.len() - 1] {
            self.run_stage(stage)?;
        }
        self.report()
    }

    pub fn run_stage(&mut self, stage: &str) -> Result<()> {
        let buckets = self.cfg.size_buckets.clone();
        match stage {
            "train-transform" => return self.train_transform_all(),
            "report" => return self.report().map(|_| ()),
            _ => {}
        }
        for b in &buckets {
            match stage {
                "prepare" => self.prepare(b)?,
                "embed" => self.embed(b)?,
                "train-kg" => self.train_kg(b)?,
                "apply" => self.apply(b)?,
                "evaluate" => self.evaluate(b).map(drop)?,
                "bench" => self.bench(b).map(drop)?,
                other => return Err(CliError::Config(format!("unknown stage {other:?}"))),
            }
        }
        Ok(())
    }

    fn par_map<I: Sync, R: Send>(&self, items: &[I], f: impl Fn(&I) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn seed(&self, stream: &str, index: u64) -> u64 {
        self.cfg.seeds().derive(stream, index)
    }

    fn source_family(&self) -> String {
        format!("source-{}", self.cfg.source.as_str())
    }

    fn target_family(&self) -> String {
        format!("target-{}", self.cfg.target.as_str())
    }

    fn finetuned_family(&self) -> String {
        format!("finetuned-{}", self.cfg.pair_name())
    }

    fn transformed_family(&self) -> String {
        format!("transformed-{}", self.cfg.pair_name())
    }

    /// Directory name of the transformation model serving `b`.
    pub fn model_scope(&self, b: &SizeBucket) -> String {
        if self.cfg.pool_buckets { "pooled".into() } else { b.dir_name() }
    }

    fn scope_buckets(&self, scope: &str) -> Vec<SizeBucket> {
        self.cfg.size_buckets.iter().copied().filter(|b| scope == "pooled" || b.dir_name() == scope).collect()
    }

    // Fingerprints chain through upstream stages, so changing any setting a
    // stage depends on marks it and everything downstream as stale.

    fn prepare_parts(&self, b: &SizeBucket) -> Parts {
        let c = &self.cfg;
        vec![
            part("dataset", &c.dataset),
            part("bucket", b),
            part("holdout_fraction", c.holdout_fraction),
            part("split_ratios", c.split_ratios),
            part("seed", c.seed),
        ]
    }

    fn embed_parts(&self, b: &SizeBucket) -> Parts {
        let mut p = self.prepare_parts(b);
        p.push(part("source", self.cfg.source));
        p.push(part("walk", self.cfg.walk_config(0)));
        p.push(part("skipgram", self.cfg.skipgram_config(0)));
        p
    }

    fn kg_parts(&self, b: &SizeBucket) -> Parts {
        let mut p = self.embed_parts(b);
        p.push(part("target", self.cfg.target));
        p.push(part("kg", self.cfg.kg_config(0, 0)));
        p
    }

    fn transform_parts(&self, scope: &str) -> Parts {
        let mut p: Parts = self.scope_buckets(scope).iter().flat_map(|b| self.kg_parts(b)).collect();
        p.push(part("transform", self.cfg.transform_config(0)));
        p.push(part("scope", scope));
        p
    }

    fn apply_parts(&self, b: &SizeBucket) -> Parts {
        let mut p = self.transform_parts(&self.model_scope(b));
        p.push(part("apply_bucket", b));
        p
    }

    /// Checks the upstream chain of `b` in order through `stage`, so the
    /// error names the earliest stage that must be rerun.
    fn require(&self, b: &SizeBucket, stage: &str) -> Result<&StageRecord> {
        let bucket = b.dir_name();
        let pair = self.cfg.pair_name();
        let scope = self.model_scope(b);
        let chain: [(&str, &str, Option<&str>, Parts); 5] = [
            ("prepare", &bucket, None, self.prepare_parts(b)),
            ("embed", &bucket, Some(self.cfg.source.as_str()), self.embed_parts(b)),
            ("train-kg", &bucket, Some(&pair), self.kg_parts(b)),
            ("train-transform", &scope, Some(&pair), self.transform_parts(&scope)),
            ("apply", &bucket, Some(&pair), self.apply_parts(b)),
        ];
        for (name, bucket, variant, parts) in &chain {
            let rec = self.manifest.require(&self.layout.root, name, bucket, *variant, &fingerprint(parts))?;
            if *name == stage {
                return Ok(rec);
            }
        }
        Err(CliError::Config(format!("{stage} is not an upstream stage")))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &mut self,
        stage: &str,
        bucket: String,
        variant: Option<String>,
        parts: &Parts,
        seeds: BTreeMap<String, u64>,
        inputs: BTreeMap<String, Vec<usize>>,
        artifacts: Vec<ArtifactRef>,
        started: u64,
    ) -> Result<()> {
        self.manifest.record(StageRecord {
            stage: stage.to_string(),
            bucket,
            variant,
            fingerprint: fingerprint(parts),
            config: snapshot(parts),
            seeds,
            inputs,
            artifacts,
            started_unix: started,
            finished_unix: unix_now(),
        });
        self.manifest.save(&self.layout.root)
    }

    pub fn load_index(&self, b: &SizeBucket) -> Result<GraphIndex> {
        self.layout.read_json(&Layout::graph_index(&b.dir_name()))
    }

    pub fn load_graph(&self, b: &SizeBucket, id: usize) -> Result<GraphRecord> {
        self.layout.read_json(&Layout::graph(&b.dir_name(), id))
    }

    fn load_dataset(&self, b: &SizeBucket) -> Result<GraphDataset> {
        let ds = &self.cfg.dataset;
        if ds.synthetic {
            let seed = self.seed(&format!("dataset/{b}"), 0);
            return Ok(generate_dataset(&ds.generator, (b.min, b.max), seed)?);
        }
        let (Some(edges), Some(communities)) = (&ds.edges, &ds.communities) else {
            return Err(CliError::Config("dataset.edges and dataset.communities are required".into()));
        };
        for p in [edges, communities] {
            if !p.exists() {
                return Err(CliError::Data(format!("dataset file {} does not exist", p.display())));
            }
        }
        load_communities(edges, communities, b.min, b.max).map_err(|e| CliError::Data(e.to_string()))
    }

    /// Extracts the bucket's graphs, holds out edges and partitions graphs
    /// into train/validation/test.
    pub fn prepare(&mut self, b: &SizeBucket) -> Result<()> {
        let started = unix_now();
        let bucket = b.dir_name();
        let dataset = self.load_dataset(b)?;
        if dataset.is_empty() {
            return Err(CliError::Data(format!("no graphs with {b} nodes in dataset {}", self.cfg.dataset.name)));
        }
        let [r0, r1, r2] = self.cfg.split_ratios;
        let partition_seed = self.seed(&format!("partition/{b}"), 0);
        let partition = split_dataset(&dataset, (r0, r1, r2), partition_seed)?;
        let mut splits = vec![Split::Train; dataset.len()];
        for &i in &partition.validation_indices {
            splits[i] = Split::Validation;
        }
        for &i in &partition.test_indices {
            splits[i] = Split::Test;
        }

        let dir = self.layout.abs(&PathBuf::from("graphs").join(&bucket));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        let mut seeds = BTreeMap::from([
            (format!("dataset/{b}"), self.seed(&format!("dataset/{b}"), 0)),
            (format!("partition/{b}"), partition_seed),
        ]);
        let mut artifacts = Vec::new();
        let mut entries = Vec::new();
        for (id, g) in dataset.graphs.iter().enumerate() {
            let holdout_seed = self.seed(&format!("holdout/{b}"), id as u64);
            let edges = split_edges(g, self.cfg.holdout_fraction, holdout_seed)?;
            if edges.held_out_edges.is_empty() {
                warn!("{bucket} graph {id} has no held-out edges and will not be evaluated");
            }
            let rec = GraphRecord { id, split: splits[id], community: g.community_id(), holdout_seed, edges };
            entries.push(IndexEntry {
                id,
                split: rec.split,
                nodes: rec.node_count(),
                train_edges: rec.edges.train_graph.edge_count(),
                held_out_edges: rec.edges.held_out_edges.len(),
            });
            let path = Layout::graph(&bucket, id);
            self.layout.write_json(&path, &rec)?;
            artifacts.push(ArtifactRef { path, deterministic: true });
            seeds.insert(format!("holdout/{}", crate::layout::graph_file(id)), holdout_seed);
        }
        let index = GraphIndex {
            bucket: b.to_string(),
            dataset: self.cfg.dataset.name.clone(),
            skipped_members: dataset.skipped_members,
            graphs: entries,
        };
        let path = Layout::graph_index(&bucket);
        self.layout.write_json(&path, &index)?;
        artifacts.push(ArtifactRef { path, deterministic: true });
        info!(
            "prepare {b}: {} graphs ({} train, {} validation, {} test)",
            index.graphs.len(),
            index.ids(Split::Train).len(),
            index.ids(Split::Validation).len(),
            index.ids(Split::Test).len()
        );
        let parts = self.prepare_parts(b);
        self.finish("prepare", bucket, None, &parts, seeds, BTreeMap::new(), artifacts, started)
    }

    /// Source embeddings for every graph of the bucket.
    pub fn embed(&mut self, b: &SizeBucket) -> Result<()> {
        let started = unix_now();
        let bucket = b.dir_name();
        self.require(b, "prepare")?;
        let index = self.load_index(b)?;
        let family = self.source_family();
        let ids: Vec<usize> = index.graphs.iter().map(|g| g.id).collect();
        let rows = self.par_map(&ids, |&id| {
            let rec = self.load_graph(b, id)?;
            let wcfg = self.cfg.walk_config(self.seed(&format!("walk/{b}"), id as u64));
            let scfg = self.cfg.skipgram_config(self.seed(&format!("skipgram/{b}"), id as u64));
            let (emb, t) = time_stage_thread("source", || walk::embed::<f64>(&rec.edges.train_graph, &wcfg, &scfg));
            let path = Layout::embedding(&bucket, &family, id, "emb");
            self.layout.write_embedding(&path, &emb?)?;
            Ok((path, timing_row(id, rec.node_count(), &t)))
        })?;
        let mut seeds = BTreeMap::new();
        for &id in &ids {
            let g = crate::layout::graph_file(id);
            seeds.insert(format!("walk/{g}"), self.seed(&format!("walk/{b}"), id as u64));
            seeds.insert(format!("skipgram/{g}"), self.seed(&format!("skipgram/{b}"), id as u64));
        }
        let (mut artifacts, timings): (Vec<_>, Vec<_>) =
            rows.into_iter().map(|(p, t)| (ArtifactRef { path: p, deterministic: true }, t)).unzip();
        let tpath = Layout::timing(&bucket, &family);
        self.layout.write_csv(&tpath, &timings)?;
        artifacts.push(ArtifactRef { path: tpath, deterministic: false });
        info!("embed {b}: {} {} embeddings", ids.len(), self.cfg.source.as_str());
        let parts = self.embed_parts(b);
        let variant = Some(self.cfg.source.as_str().to_string());
        self.finish("embed", bucket, variant, &parts, seeds, BTreeMap::new(), artifacts, started)
    }

    /// Target (fresh) and finetuned (warm-started) KG embeddings for every
    /// graph, all sharing one frozen relation.
    pub fn train_kg(&mut self, b: &SizeBucket) -> Result<()> {
        let started = unix_now();
        let bucket = b.dir_name();
        self.require(b, "embed")?;
        let index = self.load_index(b)?;
        let ids: Vec<usize> = index.graphs.iter().map(|g| g.id).collect();
        let relation_seed = self.seed("relation", 0);
        let (src_family, tgt_family, ft_family) = (self.source_family(), self.target_family(), self.finetuned_family());
        let kind = self.cfg.target;
        let rows = self.par_map(&ids, |&id| {
            let rec = self.load_graph(b, id)?;
            let g = &rec.edges.train_graph;
            let source = self.layout.read_embedding(&Layout::embedding(&bucket, &src_family, id, "emb"), "embed")?;
            let tcfg = self.cfg.kg_config(self.seed(&format!("kg-target/{b}"), id as u64), relation_seed);
            let (target, tt) = time_stage_thread("target", || kg::train(g, kind, KgInit::Fresh { dim: self.cfg.dim }, &tcfg));
            let fcfg = self.cfg.kg_config(self.seed(&format!("kg-finetune/{b}"), id as u64), relation_seed);
            let (finetuned, ft) = time_stage_thread("finetune", || kg::train(g, kind, KgInit::WarmStart(&source), &fcfg));
            let tp = Layout::embedding(&bucket, &tgt_family, id, "kg");
            let fp = Layout::embedding(&bucket, &ft_family, id, "kg");
            self.layout.write_kg(&tp, &target?)?;
            self.layout.write_kg(&fp, &finetuned?)?;
            let n = rec.node_count();
            Ok(([tp, fp], timing_row(id, n, &tt), timing_row(id, n, &ft)))
        })?;
        let mut artifacts = Vec::new();
        let (mut t_rows, mut f_rows) = (Vec::new(), Vec::new());
        for (paths, t, f) in rows {
            artifacts.extend(paths.into_iter().map(|path| ArtifactRef { path, deterministic: true }));
            t_rows.push(t);
            f_rows.push(f);
        }
        for (family, rows) in [(&tgt_family, &t_rows), (&ft_family, &f_rows)] {
            let path = Layout::timing(&bucket, family);
            self.layout.write_csv(&path, rows)?;
            artifacts.push(ArtifactRef { path, deterministic: false });
        }
        let mut seeds = BTreeMap::from([("relation".to_string(), relation_seed)]);
        for &id in &ids {
            let g = crate::layout::graph_file(id);
            seeds.insert(format!("kg-target/{g}"), self.seed(&format!("kg-target/{b}"), id as u64));
            seeds.insert(format!("kg-finetune/{g}"), self.seed(&format!("kg-finetune/{b}"), id as u64));
        }
        info!("train-kg {b}: {} target and finetuned {} models", ids.len(), kind.as_str());
        let parts = self.kg_parts(b);
        let variant = Some(self.cfg.pair_name());
        self.finish("train-kg", bucket, variant, &parts, seeds, BTreeMap::new(), artifacts, started)
    }

    fn train_transform_all(&mut self) -> Result<()> {
        let scopes: BTreeSet<String> = self.cfg.size_buckets.iter().map(|b| self.model_scope(b)).collect();
        for scope in scopes {
            self.train_transform(&scope)?;
        }
        Ok(())
    }

    /// Fits one transformation model on the train and validation graphs of
    /// the buckets in `scope`. Test graphs are never read.
    pub fn train_transform(&mut self, scope: &str) -> Result<TransformSummary> {
        let started = unix_now();
        let pair = self.cfg.pair_name();
        let (src_family, ft_family) = (self.source_family(), self.finetuned_family());
        let (mut train, mut val) = (Vec::<TrainPair64>::new(), Vec::<TrainPair64>::new());
        let mut inputs = BTreeMap::new();
        for b in self.scope_buckets(scope) {
            let bucket = b.dir_name();
            self.require(&b, "train-kg")?;
            let index = self.load_index(&b)?;
            for split in [Split::Train, Split::Validation] {
                let ids = index.ids(split);
                let pairs = self.par_map(&ids, |&id| {
                    let rec = self.load_graph(&b, id)?;
                    if rec.split == Split::Test {
                        return Err(CliError::Data(format!("{bucket} graph {id} is a test graph")));
                    }
                    let source =
                        self.layout.read_embedding(&Layout::embedding(&bucket, &src_family, id, "emb"), "embed")?;
                    let finetuned = self.layout.read_kg(&Layout::embedding(&bucket, &ft_family, id, "kg"))?;
                    Ok(TrainPair64::new(rec.edges.train_graph, source, finetuned.entities)?)
                })?;
                match split {
                    Split::Train => train.extend(pairs),
                    _ => val.extend(pairs),
                }
                inputs.insert(format!("{bucket}/{}", split.as_str()), ids);
            }
        }
        if train.is_empty() {
            return Err(CliError::Data(format!("no training graphs for transformation model {scope}")));
        }
        let seed = self.seed(&format!("transform/{scope}"), 0);
        let tcfg = self.cfg.transform_config(seed);
        info!("train-transform {scope}: {} train, {} validation graphs, {} epochs", train.len(), val.len(), tcfg.epochs);
        let out = train_transformer(&train, &val, &tcfg)?;
        if out.diverged {
            warn!("transformation training for {scope} diverged; keeping epoch {}", out.best_epoch);
        }
        let first = &out.history[0];
        let last = out.history.last().unwrap_or(first);
        let summary = TransformSummary {
            best_epoch: out.best_epoch,
            best_loss: out.best_loss,
            diverged: out.diverged,
            epochs_run: last.epoch,
            initial_train_loss: first.train_loss,
            initial_val_loss: first.val_loss,
            final_train_loss: last.train_loss,
            final_val_loss: last.val_loss,
            train_graphs: train.len(),
            validation_graphs: val.len(),
        };
        info!(
            "train-transform {scope}: best epoch {} loss {:.4} (initial {:.4})",
            out.best_epoch,
            out.best_loss,
            first.val_loss.unwrap_or(first.train_loss)
        );

        let bin = Layout::model(scope, &pair, ".embr");
        self.layout.write_params(&bin, &out.params)?;
        let dump = Layout::model(scope, &pair, ".json");
        let mut text = Vec::new();
        out.params.write_json(&mut text)?;
        crate::manifest::write_atomic(&self.layout.abs(&dump), &text)?;
        let hist = Layout::model(scope, &pair, "-history.csv");
        let rows: Vec<HistoryRow> = out.history.iter().map(HistoryRow::from).collect();
        self.layout.write_csv(&hist, &rows)?;
        let summ = Layout::model(scope, &pair, "-summary.json");
        self.layout.write_json(&summ, &summary)?;
        let artifacts = [bin, dump, hist, summ].into_iter().map(|path| ArtifactRef { path, deterministic: true }).collect();
        let parts = self.transform_parts(scope);
        let seeds = BTreeMap::from([(format!("transform/{scope}"), seed)]);
        self.finish("train-transform", scope.to_string(), Some(pair), &parts, seeds, inputs, artifacts, started)?;
        Ok(summary)
    }

    /// Checks that the model serving `b` was fitted without any of its test graphs.
    fn check_lineage(&self, b: &SizeBucket, test_ids: &[usize]) -> Result<PathBuf> {
        let scope = self.model_scope(b);
        let pair = self.cfg.pair_name();
        let rec = self.require(b, "train-transform")?;
        let bucket = b.dir_name();
        let test: BTreeSet<usize> = test_ids.iter().copied().collect();
        for (key, ids) in &rec.inputs {
            if key.starts_with(&format!("{bucket}/")) && ids.iter().any(|i| test.contains(i)) {
                return Err(CliError::Data(format!(
                    "transformation model {scope} was trained on test graphs of {bucket} ({key})"
                )));
            }
            if key == &format!("{bucket}/test") {
                return Err(CliError::Data(format!("transformation model {scope} lists test inputs for {bucket}")));
            }
        }
        Ok(self.layout.abs(&Layout::model(&scope, &pair, ".embr")))
    }

    /// Transformed embeddings of the bucket's test graphs.
    pub fn apply(&mut self, b: &SizeBucket) -> Result<()> {
        let started = unix_now();
        let bucket = b.dir_name();
        self.require(b, "embed")?;
        let index = self.load_index(b)?;
        let ids = index.ids(Split::Test);
        let theta = read_params(&self.check_lineage(b, &ids)?)?;
        let (src_family, tr_family) = (self.source_family(), self.transformed_family());
        let rows = self.par_map(&ids, |&id| {
            let rec = self.load_graph(b, id)?;
            let source = self.layout.read_embedding(&Layout::embedding(&bucket, &src_family, id, "emb"), "embed")?;
            let (out, t) = time_stage_thread("forward", || apply(&rec.edges.train_graph, &source, &theta));
            let path = Layout::embedding(&bucket, &tr_family, id, "emb");
            self.layout.write_embedding(&path, &out?)?;
            Ok((path, timing_row(id, rec.node_count(), &t)))
        })?;
        let (mut artifacts, timings): (Vec<_>, Vec<_>) =
            rows.into_iter().map(|(p, t)| (ArtifactRef { path: p, deterministic: true }, t)).unzip();
        let tpath = Layout::timing(&bucket, &tr_family);
        self.layout.write_csv(&tpath, &timings)?;
        artifacts.push(ArtifactRef { path: tpath, deterministic: false });
        info!("apply {b}: {} transformed embeddings", ids.len());
        let parts = self.apply_parts(b);
        let inputs = BTreeMap::from([(format!("{bucket}/test"), ids)]);
        let variant = Some(self.cfg.pair_name());
        self.finish("apply", bucket, variant, &parts, BTreeMap::new(), inputs, artifacts, started)
    }

    pub fn method_labels(&self) -> [String; 4] {
        let c = &self.cfg;
        [
            format!("source:{}", c.source.as_str()),
            format!("target:{}", c.target.as_str()),
            format!("finetuned:{}", c.pair_name()),
            format!("transformed:{}", c.pair_name()),
        ]
    }

    pub fn report_dir(&self, b: &SizeBucket) -> PathBuf {
        Layout::report(&b.dir_name(), &self.cfg.pair_name())
    }

    /// Link-prediction metrics of all four embedding families on the test
    /// graphs, plus ANOVA between families.
    pub fn evaluate(&mut self, b: &SizeBucket) -> Result<Vec<MetricsRow>> {
        let started = unix_now();
        let bucket = b.dir_name();
        let pair = self.cfg.pair_name();
        self.require(b, "apply")?;
        let index = self.load_index(b)?;
        let ids: Vec<usize> =
            index.graphs.iter().filter(|g| g.split == Split::Test && g.held_out_edges > 0).map(|g| g.id).collect();
        self.check_lineage(b, &index.ids(Split::Test))?;

        let families = [self.source_family(), self.target_family(), self.finetuned_family(), self.transformed_family()];
        let mut timings = Vec::new();
        for f in &families {
            timings.push(self.layout.read_timings(&Layout::timing(&bucket, f), "embed")?);
        }
        let labels = self.method_labels();
        let per_graph = self.par_map(&ids, |&id| {
            let rec = self.load_graph(b, id)?;
            let split = &rec.edges;
            let source = self.layout.read_embedding(&Layout::embedding(&bucket, &families[0], id, "emb"), "embed")?;
            let target = self.layout.read_kg(&Layout::embedding(&bucket, &families[1], id, "kg"))?;
            let finetuned = self.layout.read_kg(&Layout::embedding(&bucket, &families[2], id, "kg"))?;
            let transformed =
                self.layout.read_embedding(&Layout::embedding(&bucket, &families[3], id, "emb"), "apply")?;
            let reports = [
                evaluate_link_prediction(split, &Scorer::distance(&source))?,
                evaluate_link_prediction(split, &Scorer::from_model(&target))?,
                evaluate_link_prediction(split, &Scorer::from_model(&finetuned))?,
                evaluate_link_prediction(split, &Scorer::with_relation_only(&transformed, &target)?)?,
            ];
            Ok((rec.node_count(), reports))
        })?;

        let time = |k: usize, id: usize| -> Result<(f64, f64)> {
            let row = timings[k].get(&id).ok_or_else(|| CliError::Data(format!("no timing for graph {id} in {}", families[k])))?;
            Ok((row.cpu_seconds, row.wall_seconds))
        };
        let mut records = Vec::new();
        let mut rows = Vec::new();
        for (&id, (nodes, reports)) in ids.iter().zip(per_graph) {
            // Finetuned and transformed paths include the source embedding time.
            let stage_times: [Vec<(&str, usize)>; 4] = [
                vec![("source", 0)],
                vec![("kg-target", 1)],
                vec![("source", 0), ("kg-finetune", 2)],
                vec![("source", 0), ("forward", 3)],
            ];
            for ((mut report, label), stages) in reports.into_iter().zip(&labels).zip(stage_times) {
                for (name, k) in stages {
                    report.timings.insert(name.to_string(), time(k, id)?);
                }
                rows.push(MetricsRow::new(&self.cfg.dataset.name, &b.to_string(), label, id, &report));
                records.push(MetricsRecord { method: label.clone(), graph_id: id, nodes, report });
            }
        }

        let mut anova = Vec::new();
        let mrrs = |label: &str| -> Vec<f64> { rows.iter().filter(|r| r.method == label).map(|r| r.mrr).collect() };
        for (i, j) in [(0, 3), (1, 2), (0, 2), (2, 3), (0, 1)] {
            let (g1, g2) = (mrrs(&labels[i]), mrrs(&labels[j]));
            if g1.len() < 2 || g2.len() < 2 {
                warn!("{bucket}: too few test graphs for ANOVA of {} vs {}", labels[i], labels[j]);
                continue;
            }
            let r = anova_one_way(&g1, &g2)?;
            anova.push(AnovaRow {
                size_bucket: b.to_string(),
                group1: labels[i].clone(),
                group2: labels[j].clone(),
                n1: g1.len(),
                n2: g2.len(),
                mean1: mean(g1.iter().copied()),
                mean2: mean(g2.iter().copied()),
                mean_difference: r.mean_difference,
                f_statistic: r.f_statistic,
                p_value: r.p_value,
            });
        }

        let dir = self.report_dir(b);
        let (csv_path, json_path, anova_path) = (dir.join("metrics.csv"), dir.join("metrics.json"), dir.join("anova.json"));
        self.layout.write_csv(&csv_path, &rows)?;
        let doc = MetricsDocument {
            dataset: self.cfg.dataset.name.clone(),
            size_bucket: b.to_string(),
            query_directions: "both".into(),
            filtered: true,
            records,
        };
        self.layout.write_json(&json_path, &doc)?;
        self.layout.write_json(&anova_path, &anova)?;
        for a in &anova {
            info!(
                "{b} {} vs {}: means {:.4} / {:.4}, F = {:.3}, p = {:.4}",
                a.group1, a.group2, a.mean1, a.mean2, a.f_statistic, a.p_value
            );
        }
        let artifacts = vec![
            ArtifactRef { path: csv_path, deterministic: false },
            ArtifactRef { path: json_path, deterministic: false },
            ArtifactRef { path: anova_path, deterministic: true },
        ];
        let parts = self.apply_parts(b);
        let inputs = BTreeMap::from([(format!("{bucket}/test"), ids)]);
        self.finish("evaluate", bucket, Some(pair), &parts, BTreeMap::new(), inputs, artifacts, started)?;
        Ok(rows)
    }

    /// Sequentially re-times both paths on every test graph with the process
    /// CPU clock, so no other work is charged to a stage.
    pub fn bench(&mut self, b: &SizeBucket) -> Result<Vec<BenchRow>> {
        let started = unix_now();
        let bucket = b.dir_name();
        let pair = self.cfg.pair_name();
        self.require(b, "prepare")?;
        let index = self.load_index(b)?;
        let ids: Vec<usize> =
            index.graphs.iter().filter(|g| g.split == Split::Test && g.held_out_edges > 0).map(|g| g.id).collect();
        let theta = read_params(&self.check_lineage(b, &index.ids(Split::Test))?)?;
        let relation_seed = self.seed("relation", 0);
        let mut rows = Vec::new();
        for &id in &ids {
            let rec = self.load_graph(b, id)?;
            let g = &rec.edges.train_graph;
            let wcfg = self.cfg.walk_config(self.seed(&format!("walk/{b}"), id as u64));
            let scfg = self.cfg.skipgram_config(self.seed(&format!("skipgram/{b}"), id as u64));
            let (source, ts) = time_stage("source", || walk::embed::<f64>(g, &wcfg, &scfg));
            let source = source?;
            let fcfg = self.cfg.kg_config(self.seed(&format!("kg-finetune/{b}"), id as u64), relation_seed);
            let (finetuned, tk) = time_stage("finetune", || kg::train(g, self.cfg.target, KgInit::WarmStart(&source), &fcfg));
            let finetuned: KgModel64 = finetuned?;
            let (transformed, tf) = time_stage("forward", || apply(g, &source, &theta));
            let transformed: EmbeddingMatrix64 = transformed?;
            let fin = evaluate_link_prediction(&rec.edges, &Scorer::from_model(&finetuned))?;
            let tra = evaluate_link_prediction(&rec.edges, &Scorer::with_relation_only(&transformed, &finetuned)?)?;
            rows.push(BenchRow {
                size_bucket: b.to_string(),
                pair: pair.clone(),
                graph_id: id,
                nodes: rec.node_count(),
                source_cpu: ts.cpu_seconds,
                kg_cpu: tk.cpu_seconds,
                forward_cpu: tf.cpu_seconds,
                finetune_path_cpu: ts.cpu_seconds + tk.cpu_seconds,
                transform_path_cpu: ts.cpu_seconds + tf.cpu_seconds,
                finetune_path_wall: ts.wall_seconds + tk.wall_seconds,
                transform_path_wall: ts.wall_seconds + tf.wall_seconds,
                finetuned_mrr: fin.mrr,
                transformed_mrr: tra.mrr,
            });
        }
        let path = self.report_dir(b).join("bench.csv");
        self.layout.write_csv(&path, &rows)?;
        let parts = self.apply_parts(b);
        let inputs = BTreeMap::from([(format!("{bucket}/test"), ids)]);
        let artifacts = vec![ArtifactRef { path, deterministic: false }];
        self.finish("bench", bucket, Some(pair), &parts, BTreeMap::new(), inputs, artifacts, started)?;
        self.write_bench_summary()?;
        Ok(rows)
    }

    fn records_of(&self, stage: &str) -> Vec<(String, PathBuf)> {
        let mut out: Vec<(String, PathBuf)> = self
            .manifest
            .stages
            .iter()
            .filter(|r| r.stage == stage)
            .filter_map(|r| Some((r.bucket.clone(), r.artifacts.first()?.path.clone())))
            .collect();
        out.sort_by_key(|(b, _)| b.trim_start_matches('b').split('-').next().and_then(|s| s.parse::<usize>().ok()));
        out
    }

    /// `reports/bench.csv`: per-bucket means over every bench run recorded.
    fn write_bench_summary(&self) -> Result<()> {
        let mut summary = Vec::new();
        for (_, path) in self.records_of("bench") {
            let rows: Vec<BenchRow> = self.layout.read_csv(&path, "bench")?;
            let Some(first) = rows.first() else { continue };
            let m = |f: fn(&BenchRow) -> f64| mean(rows.iter().map(f));
            summary.push(BenchSummaryRow {
                size_bucket: first.size_bucket.clone(),
                pair: first.pair.clone(),
                graphs: rows.len(),
                mean_nodes: m(|r| r.nodes as f64),
                mean_source_cpu: m(|r| r.source_cpu),
                mean_kg_cpu: m(|r| r.kg_cpu),
                mean_forward_cpu: m(|r| r.forward_cpu),
                mean_finetune_path_cpu: m(|r| r.finetune_path_cpu),
                mean_transform_path_cpu: m(|r| r.transform_path_cpu),
                mean_finetuned_mrr: m(|r| r.finetuned_mrr),
                mean_transformed_mrr: m(|r| r.transformed_mrr),
            });
        }
        self.layout.write_csv(Path::new("reports/bench.csv"), &summary)
    }

    /// `reports/summary.csv`: per-bucket, per-method means over every
    /// evaluation recorded in the manifest.
    pub fn report(&mut self) -> Result<Vec<SummaryRow>> {
        let mut summary = Vec::new();
        let mut anova = Vec::new();
        for (_, path) in self.records_of("evaluate") {
            let rows: Vec<MetricsRow> = self.layout.read_csv(&path, "evaluate")?;
            let mut methods: Vec<&str> = Vec::new();
            for r in &rows {
                if !methods.contains(&r.method.as_str()) {
                    methods.push(&r.method);
                }
            }
            for method in methods {
                let sel: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == method).collect();
                let mrrs: Vec<f64> = sel.iter().map(|r| r.mrr).collect();
                summary.push(SummaryRow {
                    size_bucket: sel[0].size_bucket.clone(),
                    method: method.to_string(),
                    graphs: sel.len(),
                    mean_mrr: mean(mrrs.iter().copied()),
                    sd_mrr: sample_sd(&mrrs),
                    mean_p_at_1: mean(sel.iter().map(|r| r.p_at_1)),
                    mean_p_at_3: mean(sel.iter().map(|r| r.p_at_3)),
                    mean_p_at_10: mean(sel.iter().map(|r| r.p_at_10)),
                    mean_cpu_seconds: mean(sel.iter().map(|r| r.cpu_seconds)),
                });
            }
            let a: Vec<AnovaRow> = self.layout.read_json(&path.with_file_name("anova.json"))?;
            anova.extend(a);
        }
        if summary.is_empty() {
            return Err(CliError::MissingArtifact {
                path: self.layout.abs(Path::new(crate::manifest::MANIFEST_FILE)),
                remedy: "no evaluation recorded; run `walk2kg evaluate` first".into(),
            });
        }
        self.layout.write_csv(Path::new("reports/summary.csv"), &summary)?;
        self.layout.write_csv(Path::new("reports/summary-anova.csv"), &anova)?;
        Ok(summary)
    }
}

/// Reads a graph for single-graph `apply`: a graph record or graph JSON, or
/// a whitespace-separated edge list.
pub fn read_graph_file(path: &Path) -> Result<Graph> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if let Ok(rec) = serde_json::from_str::<GraphRecord>(&text) {
            return Ok(rec.edges.train_graph);
        }
        return serde_json::from_str::<Graph>(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
    }
    if !path.exists() {
        return Err(CliError::Data(format!("graph file {} does not exist", path.display())));
    }
    load_edge_list(path).map_err(|e| CliError::Data(e.to_string()))
}

/// Applies a saved model to one graph. Without `embedding`, the source
/// embedding is computed with the configured walk and skip-gram settings.
pub fn apply_single(
    cfg: &PipelineConfig,
    model: &Path,
    graph: &Path,
    embedding: Option<&Path>,
    output: &Path,
    text: bool,
) -> Result<EmbeddingMatrix64> {
    let theta = read_params(model)?;
    let g = read_graph_file(graph)?;
    let source = match embedding {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| CliError::io(p, e))?;
            EmbeddingMatrix64::read_binary(std::io::BufReader::new(f))?
        }
        None => {
            let seeds = cfg.seeds();
            walk::embed(&g, &cfg.walk_config(seeds.derive("walk/single", 0)), &cfg.skipgram_config(seeds.derive("skipgram/single", 0)))?
        }
    };
    if source.dim() != theta.dim() {
        return Err(CliError::Data(format!("embedding dim {} but model dim {}", source.dim(), theta.dim())));
    }
    let out = apply(&g, &source, &theta)?;
    let mut buf = Vec::new();
    if text { out.write_text(&mut buf)? } else { out.write_binary(&mut buf)? }
    crate::manifest::write_atomic(output, &buf)?;
    Ok(out)
}
