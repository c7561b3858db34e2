use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{invalid, shape, Error, Result};
use crate::graph::{EdgeSplit, Triple};
use crate::kg::{score_unchecked, Entity, KgModel, KgModelKind, NormOrder, RelationParams};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const PRECISION_KS: [usize; 3] = [1, 3, 10];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    PredictTail,
    PredictHead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RankQuery {
    pub known_entity: usize,
    pub direction: Direction,
    pub true_answer: usize,
}

impl RankQuery {
    pub fn new(known_entity: usize, direction: Direction, true_answer: usize) -> Result<Self> {
        if known_entity == true_answer {
            return Err(invalid("query answer equals the known entity"));
        }
        Ok(Self { known_entity, direction, true_answer })
    }

    fn triple(&self, candidate: usize) -> Triple {
        match self.direction {
            Direction::PredictTail => Triple::new(self.known_entity, candidate),
            Direction::PredictHead => Triple::new(candidate, self.known_entity),
        }
    }
}

/// Entity embeddings paired with the relation used to score them.
#[derive(Clone, Debug)]
pub struct Scorer<'a, T> {
    entities: &'a Matrix<T>,
    aux: Option<Matrix<T>>,
    relation: RelationParams<T>,
    norm: NormOrder,
}

impl<'a, T: Scalar> Scorer<'a, T> {
    pub fn new(
        entities: &'a EmbeddingMatrix<T>,
        aux: Option<Matrix<T>>,
        relation: RelationParams<T>,
        norm: NormOrder,
    ) -> Result<Self> {
        let (n, d) = entities.values().shape();
        if relation.dim() != d {
            return Err(shape(format!("relation of dimension {d}"), relation.dim().to_string()));
        }
        match (&aux, relation.kind().needs_aux()) {
            (None, true) => return Err(invalid(format!("{} needs auxiliary vectors", relation.kind()))),
            (Some(a), true) if a.shape() != (n, d) => {
                return Err(shape(format!("aux {n}x{d}"), format!("{:?}", a.shape())))
            }
            (Some(_), false) => return Err(invalid(format!("{} takes no auxiliary vectors", relation.kind()))),
            _ => {}
        }
        Ok(Self { entities: entities.values(), aux, relation, norm })
    }

    /// Negative L2 distance between node vectors: TransE with a zero relation.
    pub fn distance(entities: &'a EmbeddingMatrix<T>) -> Self {
        Self {
            entities: entities.values(),
            aux: None,
            relation: RelationParams::zero_translation(entities.dim()),
            norm: NormOrder::L2,
        }
    }

    pub fn from_model(model: &'a KgModel<T>) -> Self {
        Self {
            entities: model.entities.values(),
            aux: model.aux.values.clone(),
            relation: model.relation.clone(),
            norm: model.norm,
        }
    }

    /// Scores `entities` with a trained model's relation but without per-entity
    /// auxiliary vectors: TransD projection vectors are zero and SimplE's second
    /// embedding equals the first.
    pub fn with_relation_only(entities: &'a EmbeddingMatrix<T>, model: &KgModel<T>) -> Result<Self> {
        let aux = match model.kind() {
            KgModelKind::TransD => Some(Matrix::zeros(entities.node_count(), entities.dim())),
            KgModelKind::SimplE => Some(entities.values().clone()),
            _ => None,
        };
        Self::new(entities, aux, model.relation.clone(), model.norm)
    }

    pub fn node_count(&self) -> usize {
        self.entities.rows()
    }

    pub fn kind(&self) -> KgModelKind {
        self.relation.kind()
    }

    fn entity(&self, i: usize) -> Entity<'_, T> {
        Entity { vec: self.entities.row(i), aux: self.aux.as_ref().map(|a| a.row(i)) }
    }

    pub fn score(&self, head: usize, tail: usize) -> T {
        score_unchecked(&self.relation, self.norm, self.entity(head), self.entity(tail))
    }
}

/// Both orientations of every edge in `triples`.
pub fn filter_set(triples: impl IntoIterator<Item = Triple>) -> HashSet<Triple> {
    triples
        .into_iter()
        .flat_map(|t| [t, Triple { head: t.tail, relation: t.relation, tail: t.head }])
        .collect()
}

/// Filtered mid-rank of the true answer among all entities other than the
/// known one.
pub fn rank_candidates<T: Scalar>(q: &RankQuery, scorer: &Scorer<'_, T>, filter: &HashSet<Triple>) -> Result<f64> {
    let n = scorer.node_count();
    if q.known_entity >= n || q.true_answer >= n {
        return Err(invalid(format!("query entity out of range for {n} nodes")));
    }
    if q.known_entity == q.true_answer {
        return Err(invalid("query answer equals the known entity"));
    }
    let score_of = |c: usize| match q.direction {
        Direction::PredictTail => scorer.score(q.known_entity, c),
        Direction::PredictHead => scorer.score(c, q.known_entity),
    };
    let truth = score_of(q.true_answer);
    if !truth.is_finite() {
        return Err(Error::Internal("non-finite score for the true answer".into()));
    }
    let (mut higher, mut tied) = (0usize, 0usize);
    for c in 0..n {
        if c == q.known_entity || c == q.true_answer || filter.contains(&q.triple(c)) {
            continue;
        }
        let s = score_of(c);
        if s > truth {
            higher += 1;
        } else if s == truth {
            tied += 1;
        }
    }
    Ok(1.0 + higher as f64 + 0.5 * tied as f64)
}

pub fn mrr(ranks: &[f64]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(invalid("no ranks"));
    }
    Ok(ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64)
}

pub fn precision_at_k(ranks: &[f64], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(invalid("no ranks"));
    }
    if k < 1 {
        return Err(invalid("k must be at least 1"));
    }
    Ok(ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / ranks.len() as f64)
}

/// Per-graph link-prediction metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr: f64,
    pub precision_at_k: BTreeMap<usize, f64>,
    pub query_count: usize,
    pub ranks: Vec<f64>,
    /// Stage label → (cpu seconds, wall seconds).
    pub timings: BTreeMap<String, (f64, f64)>,
}

impl MetricsReport {
    pub fn from_ranks(ranks: Vec<f64>) -> Result<Self> {
        let mut precision = BTreeMap::new();
        for k in PRECISION_KS {
            precision.insert(k, precision_at_k(&ranks, k)?);
        }
        Ok(Self {
            mrr: mrr(&ranks)?,
            precision_at_k: precision,
            query_count: ranks.len(),
            ranks,
            timings: BTreeMap::new(),
        })
    }

    pub fn total_cpu_seconds(&self) -> f64 {
        self.timings.values().map(|t| t.0).sum()
    }

    pub fn total_wall_seconds(&self) -> f64 {
        self.timings.values().map(|t| t.1).sum()
    }

    pub fn p_at(&self, k: usize) -> f64 {
        self.precision_at_k.get(&k).copied().unwrap_or(f64::NAN)
    }
}

/// One line of the flat metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub size_bucket: String,
    pub method: String,
    pub graph_id: usize,
    pub mrr: f64,
    pub p_at_1: f64,
    pub p_at_3: f64,
    pub p_at_10: f64,
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
}

impl MetricsRow {
    pub fn new(dataset: &str, size_bucket: &str, method: &str, graph_id: usize, report: &MetricsReport) -> Self {
        Self {
            dataset: dataset.to_string(),
            size_bucket: size_bucket.to_string(),
            method: method.to_string(),
            graph_id,
            mrr: report.mrr,
            p_at_1: report.p_at(1),
            p_at_3: report.p_at(3),
            p_at_10: report.p_at(10),
            cpu_seconds: report.total_cpu_seconds(),
            wall_seconds: report.total_wall_seconds(),
        }
    }
}

/// Ranks both endpoints of every held-out edge against a filter of all train
/// and held-out facts.
pub fn evaluate_link_prediction<T: Scalar>(split: &EdgeSplit, scorer: &Scorer<'_, T>) -> Result<MetricsReport> {
    if split.held_out_edges.is_empty() {
        return Err(invalid("no held-out edges to evaluate"));
    }
    let n = split.train_graph.node_count();
    if scorer.node_count() != n {
        return Err(shape(format!("{n} embedding rows"), scorer.node_count().to_string()));
    }
    let filter = filter_set(
        split
            .train_graph
            .edges()
            .iter()
            .chain(&split.held_out_edges)
            .map(|&(u, v)| Triple::new(u, v)),
    );
    let mut ranks = Vec::with_capacity(2 * split.held_out_edges.len());
    for &(u, v) in &split.held_out_edges {
        ranks.push(rank_candidates(&RankQuery::new(u, Direction::PredictTail, v)?, scorer, &filter)?);
        ranks.push(rank_candidates(&RankQuery::new(v, Direction::PredictHead, u)?, scorer, &filter)?);
    }
    MetricsReport::from_ranks(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Provenance;
    use crate::graph::{split_edges, Graph};
    use proptest::prelude::*;

    fn line_embedding(xs: &[f64]) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::new(Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap(), Provenance::Source).unwrap()
    }

    #[test]
    fn top_scored_answer_has_rank_one() {
        let e = line_embedding(&[0.0, 0.1, 5.0, 9.0]);
        let s = Scorer::distance(&e);
        let q = RankQuery::new(0, Direction::PredictTail, 1).unwrap();
        assert_eq!(rank_candidates(&q, &s, &HashSet::new()).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_give_mid_rank() {
        let e = line_embedding(&[1.0; 4]);
        let q = RankQuery::new(0, Direction::PredictHead, 3).unwrap();
        assert_eq!(rank_candidates(&q, &Scorer::distance(&e), &HashSet::new()).unwrap(), 2.0);
    }

    #[test]
    fn filtering_removes_known_facts() {
        // Candidate 1 outscores the answer 2 but ⟨0,1⟩ is a known fact.
        let e = line_embedding(&[0.0, 0.1, 0.5, 3.0, 4.0]);
        let s = Scorer::distance(&e);
        let q = RankQuery::new(0, Direction::PredictTail, 2).unwrap();
        assert_eq!(rank_candidates(&q, &s, &HashSet::new()).unwrap(), 2.0);
        let filter = filter_set([Triple::new(1, 0), Triple::new(0, 2)]);
        assert_eq!(rank_candidates(&q, &s, &filter).unwrap(), 1.0);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mrr(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!((mrr(&[1.0, 2.0, 4.0]).unwrap() - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!(mrr(&[10.0]).unwrap(), 0.1);
        assert!(mrr(&[]).is_err());
        assert!((precision_at_k(&[1.0, 3.0, 7.0], 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&[1.0, 3.0, 7.0], 100).unwrap(), 1.0);
        assert_eq!(precision_at_k(&[2.0], 1).unwrap(), 0.0);
        assert!(precision_at_k(&[], 1).is_err());
        assert!(precision_at_k(&[1.0], 0).is_err());
    }

    #[test]
    fn perfect_embeddings_score_one_and_two_queries_per_edge() {
        // Two far-apart cliques: every held-out neighbor is the nearest candidate
        // once train neighbors are filtered.
        let mut edges = Vec::new();
        for base in [0, 4] {
            for u in 0..4 {
                for v in u + 1..4 {
                    edges.push((base + u, base + v));
                }
            }
        }
        let g = Graph::new(8, edges).unwrap();
        let split = split_edges(&g, 0.25, 3).unwrap();
        let e = line_embedding(&[0.0, 0.0, 0.0, 0.0, 100.0, 100.0, 100.0, 100.0]);
        let report = evaluate_link_prediction(&split, &Scorer::distance(&e)).unwrap();
        assert_eq!(report.query_count, 2 * split.held_out_edges.len());
        assert_eq!(report.mrr, 1.0);
        assert_eq!(report.p_at(1), 1.0);
    }

    #[test]
    fn scorer_checks_aux() {
        let e = line_embedding(&[0.0, 1.0]);
        let rel = RelationParams::<f64>::init(KgModelKind::TransD, 1, 0).unwrap();
        assert!(Scorer::new(&e, None, rel.clone(), NormOrder::L2).is_err());
        assert!(Scorer::new(&e, Some(Matrix::zeros(2, 1)), rel, NormOrder::L2).is_ok());
        let rel = RelationParams::<f64>::zero_translation(1);
        assert!(Scorer::new(&e, Some(Matrix::zeros(2, 1)), rel, NormOrder::L2).is_err());
    }

    fn brute_force_rank(scores: &[f64], known: usize, truth: usize, filtered: &[bool]) -> f64 {
        let mut list: Vec<(usize, f64)> = (0..scores.len())
            .filter(|&c| c != known && (c == truth || !filtered[c]))
            .map(|c| (c, scores[c]))
            .collect();
        list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let t = scores[truth];
        let first = list.iter().position(|x| x.1 == t).unwrap();
        let last = list.iter().rposition(|x| x.1 == t).unwrap();
        // 1-based positions of the tie block, averaged over the other tied entries.
        let block = (last - first + 1) as f64;
        (first + 1) as f64 + (block - 1.0) / 2.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn rank_matches_sort_and_locate(
            n in 2usize..=8,
            raw in proptest::collection::vec(0u8..4, 8),
            mask in proptest::collection::vec(any::<bool>(), 8),
            known_raw in 0usize..8,
            truth_raw in 0usize..8,
            tail in any::<bool>(),
        ) {
            let known = known_raw % n;
            let truth = (known + 1 + truth_raw % (n - 1)) % n;
            // Coarse values make ties frequent.
            let xs: Vec<f64> = raw[..n].iter().map(|&v| v as f64).collect();
            let e = line_embedding(&xs);
            let s = Scorer::distance(&e);
            let dir = if tail { Direction::PredictTail } else { Direction::PredictHead };
            let q = RankQuery::new(known, dir, truth).unwrap();
            let filter = filter_set((0..n).filter(|&c| mask[c] && c != known).map(|c| Triple::new(known, c)));
            let filtered: Vec<bool> = (0..n).map(|c| c != known && mask[c]).collect();
            let scores: Vec<f64> = (0..n).map(|c| if tail { s.score(known, c) } else { s.score(c, known) }).collect();
            let got = rank_candidates(&q, &s, &filter).unwrap();
            prop_assert_eq!(got, brute_force_rank(&scores, known, truth, &filtered));
            let unfiltered = rank_candidates(&q, &s, &HashSet::new()).unwrap();
            prop_assert!(got <= unfiltered);
            prop_assert!(1.0 / got >= 1.0 / (n as f64 - 1.0));
        }

        #[test]
        fn precision_monotone_in_k(ranks in proptest::collection::vec(1.0f64..50.0, 1..30), k in 1usize..40) {
            prop_assert!(precision_at_k(&ranks, k).unwrap() <= precision_at_k(&ranks, k + 1).unwrap());
        }
    }
}
