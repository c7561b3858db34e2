//! Margin-ranking SGD over the triples of one graph.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    negative_sample, score_grad_unchecked, score_unchecked, Entity, EntityAuxParams, KgModelKind, NormOrder,
    RelationParams,
};
use crate::embedding::{EmbeddingMatrix, Provenance};
use crate::error::{invalid, shape, Result};
use crate::graph::{to_triples, Graph, Triple};
use crate::linalg::Matrix;
use crate::scalar::{l2_norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgTrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub norm_order: NormOrder,
    /// L2 penalty for the non-translational models.
    pub weight_decay: f64,
    pub seed: u64,
    /// Seed of the frozen relation parameters; falls back to `seed`. Set it
    /// to share one relation across many graphs.
    pub relation_seed: Option<u64>,
}

impl Default for KgTrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 500,
            negatives_per_positive: 1,
            norm_order: NormOrder::L2,
            weight_decay: 1e-5,
            seed: 0,
            relation_seed: None,
        }
    }
}

impl KgTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !(self.learning_rate > 0.0) {
            return Err(invalid("margin and learning rate must be positive"));
        }
        if self.negatives_per_positive == 0 {
            return Err(invalid("negatives_per_positive must be at least 1"));
        }
        if self.weight_decay < 0.0 {
            return Err(invalid("weight decay must be non-negative"));
        }
        Ok(())
    }
}

/// Starting point of KG training.
#[derive(Debug, Clone, Copy)]
pub enum KgInit<'a, T> {
    /// Seeded `U(-6/√d, 6/√d)`; produces target embeddings.
    Fresh { dim: usize },
    /// Source embeddings; produces finetuned embeddings.
    WarmStart(&'a EmbeddingMatrix<T>),
}

/// Trained entity vectors plus the frozen relation they were trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct KgModel<T> {
    pub entities: EmbeddingMatrix<T>,
    pub aux: EntityAuxParams<T>,
    pub relation: RelationParams<T>,
    pub norm: NormOrder,
    /// Mean hinge loss per epoch.
    pub loss_history: Vec<f64>,
}

impl<T: Scalar> KgModel<T> {
    pub fn kind(&self) -> KgModelKind {
        self.relation.kind()
    }

    pub fn entity(&self, i: usize) -> Entity<'_, T> {
        Entity {
            vec: self.entities.row(i),
            aux: self.aux.row(i),
        }
    }

    pub fn score(&self, head: usize, tail: usize) -> T {
        score_unchecked(&self.relation, self.norm, self.entity(head), self.entity(tail))
    }
}

/// Sparse gradient of a pair loss: `(entity row, ∂/∂main, ∂/∂aux)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad<T> {
    pub rows: Vec<(usize, Vec<T>, Option<Vec<T>>)>,
}

impl<T: Scalar> SparseGrad<T> {
    fn add(&mut self, row: usize, sign: T, main: &[T], aux: Option<&Vec<T>>) {
        let slot = match self.rows.iter().position(|(r, _, _)| *r == row) {
            Some(i) => i,
            None => {
                let d = main.len();
                self.rows.push((row, vec![T::zero(); d], aux.map(|_| vec![T::zero(); d])));
                self.rows.len() - 1
            }
        };
        let (_, gm, ga) = &mut self.rows[slot];
        crate::scalar::axpy(sign, main, gm);
        if let (Some(ga), Some(a)) = (ga.as_mut(), aux) {
            crate::scalar::axpy(sign, a, ga);
        }
    }

    /// Dense `(main, aux)` gradient matrices.
    pub fn densify(&self, n: usize, d: usize) -> (Matrix<T>, Matrix<T>) {
        let (mut main, mut aux) = (Matrix::zeros(n, d), Matrix::zeros(n, d));
        for (r, gm, ga) in &self.rows {
            main.row_mut(*r).copy_from_slice(gm);
            if let Some(ga) = ga {
                aux.row_mut(*r).copy_from_slice(ga);
            }
        }
        (main, aux)
    }
}

/// Hinge loss `max(0, margin − score(pos) + score(neg))` and its gradient
/// with respect to every entity vector it touches.
pub fn margin_loss_grad<T: Scalar>(
    relation: &RelationParams<T>,
    norm: NormOrder,
    margin: T,
    entities: &Matrix<T>,
    aux: Option<&Matrix<T>>,
    pos: Triple,
    neg: Triple,
) -> (T, SparseGrad<T>) {
    let ent = |i: usize| Entity {
        vec: entities.row(i),
        aux: aux.map(|a| a.row(i)),
    };
    let gp = score_grad_unchecked(relation, norm, ent(pos.head), ent(pos.tail));
    let gn = score_grad_unchecked(relation, norm, ent(neg.head), ent(neg.tail));
    let loss = margin - gp.score + gn.score;
    let mut grad = SparseGrad::default();
    if loss <= T::zero() {
        return (T::zero(), grad);
    }
    let one = T::one();
    grad.add(pos.head, -one, &gp.head, gp.head_aux.as_ref());
    grad.add(pos.tail, -one, &gp.tail, gp.tail_aux.as_ref());
    grad.add(neg.head, one, &gn.head, gn.head_aux.as_ref());
    grad.add(neg.tail, one, &gn.tail, gn.tail_aux.as_ref());
    (loss, grad)
}

fn project_unit_ball<T: Scalar>(row: &mut [T]) {
    let len = l2_norm(row);
    if len > T::one() {
        row.iter_mut().for_each(|x| *x /= len);
    }
}

/// Trains entity vectors of `g` under `kind` with the relation frozen.
///
/// `epochs = 0` returns the initial entity matrix untouched.
pub fn train<T: Scalar>(g: &Graph, kind: KgModelKind, init: KgInit<'_, T>, cfg: &KgTrainConfig) -> Result<KgModel<T>> {
    cfg.validate()?;
    if g.edge_count() == 0 {
        return Err(invalid("KG training needs at least one edge"));
    }
    let n = g.node_count();
    let d = match init {
        KgInit::Fresh { dim } => dim,
        KgInit::WarmStart(e) => {
            if e.node_count() != n {
                return Err(shape(format!("{n} embedding rows"), format!("{}", e.node_count())));
            }
            e.dim()
        }
    };
    if d == 0 {
        return Err(invalid("embedding dimension must be at least 1"));
    }
    let relation = RelationParams::init(kind, d, cfg.relation_seed.unwrap_or(cfg.seed))?;
    let bound = 6.0 / (d as f64).sqrt();
    let draw = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        Matrix::from_fn(n, d, |_, _| T::of(rng.gen_range(-bound..bound)))
    };
    let (mut entities, provenance) = match init {
        KgInit::Fresh { .. } => (draw(1), Provenance::Target),
        KgInit::WarmStart(e) => (e.values().clone(), Provenance::Finetuned),
    };
    let mut aux = kind.needs_aux().then(|| draw(2));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let triples = to_triples(g);
    let known: HashSet<Triple> = triples.iter().copied().collect();
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let lr = T::of(cfg.learning_rate);
    let margin = T::of(cfg.margin);
    let decay = (!kind.is_translational() && cfg.weight_decay > 0.0).then(|| T::one() - lr * T::of(cfg.weight_decay));
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let pos = triples[i];
            for _ in 0..cfg.negatives_per_positive {
                let neg = negative_sample(pos, n, &known, &mut rng);
                let (loss, grad) = margin_loss_grad(&relation, cfg.norm_order, margin, &entities, aux.as_ref(), pos, neg);
                total += loss.to_f64_lossy();
                if let Some(keep) = decay {
                    for r in [pos.head, pos.tail, neg.head, neg.tail] {
                        entities.row_mut(r).iter_mut().for_each(|x| *x *= keep);
                        if let Some(a) = aux.as_mut() {
                            a.row_mut(r).iter_mut().for_each(|x| *x *= keep);
                        }
                    }
                }
                for (r, gm, ga) in &grad.rows {
                    crate::scalar::axpy(-lr, gm, entities.row_mut(*r));
                    if let (Some(a), Some(ga)) = (aux.as_mut(), ga) {
                        crate::scalar::axpy(-lr, ga, a.row_mut(*r));
                    }
                    if kind.is_translational() {
                        project_unit_ball(entities.row_mut(*r));
                    }
                }
            }
        }
        if kind.is_translational() {
            for r in 0..n {
                project_unit_ball(entities.row_mut(r));
            }
        }
        history.push(total / (triples.len() * cfg.negatives_per_positive) as f64);
    }

    Ok(KgModel {
        entities: EmbeddingMatrix::new(entities, provenance)?,
        aux: EntityAuxParams { values: aux },
        relation,
        norm: cfg.norm_order,
        loss_history: history,
    })
}
