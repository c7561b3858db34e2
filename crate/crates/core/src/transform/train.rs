use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{forward_matrix, ForwardCache};
use super::{init_params, AttentionParams};
use crate::embedding::EmbeddingMatrix;
use crate::error::{invalid, shape, Result};
use crate::graph::{adjacency, AdjacencyMatrix, Graph};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// A graph with its source embedding and the KG-finetuned target.
#[derive(Clone, Debug)]
pub struct TrainPair<T> {
    graph: Graph,
    source: EmbeddingMatrix<T>,
    finetuned: EmbeddingMatrix<T>,
    adjacency: AdjacencyMatrix<T>,
}

impl<T: Scalar> TrainPair<T> {
    pub fn new(graph: Graph, source: EmbeddingMatrix<T>, finetuned: EmbeddingMatrix<T>) -> Result<Self> {
        let n = graph.node_count();
        if source.node_count() != n || source.values().shape() != finetuned.values().shape() {
            return Err(shape(
                format!("two {n}x{} embeddings", source.dim()),
                format!("{:?} and {:?}", source.values().shape(), finetuned.values().shape()),
            ));
        }
        let adjacency = adjacency(&graph);
        Ok(Self { graph, source, finetuned, adjacency })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn source(&self) -> &EmbeddingMatrix<T> {
        &self.source
    }

    pub fn finetuned(&self) -> &EmbeddingMatrix<T> {
        &self.finetuned
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    fn forward(&self, theta: &AttentionParams<T>) -> Result<ForwardCache<T>> {
        forward_matrix(self.adjacency.matrix(), self.source.values(), theta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformTrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Rescales each minibatch gradient to at most this Frobenius norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for TransformTrainConfig {
    fn default() -> Self {
        Self { batch_size: 32, learning_rate: 0.001, epochs: 3000, seed: 0, max_grad_norm: None }
    }
}

impl TransformTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if matches!(self.max_grad_norm, Some(c) if !(c > 0.0)) {
            return Err(invalid("max_grad_norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation pairs were supplied.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TransformTrainOutcome<T> {
    pub params: AttentionParams<T>,
    /// Entry 0 holds the losses of the initial parameters.
    pub history: Vec<EpochLoss>,
    /// Epoch whose parameters were kept; 0 means the initial parameters.
    pub best_epoch: usize,
    pub best_loss: f64,
    /// Set when training stopped on a non-finite loss.
    pub diverged: bool,
}

/// Mean squared row distance, `‖t − f‖²_F / n`.
pub fn embedding_error<T: Scalar>(t: &EmbeddingMatrix<T>, f: &EmbeddingMatrix<T>) -> Result<T> {
    matrix_error(t.values(), f.values())
}

fn matrix_error<T: Scalar>(t: &Matrix<T>, f: &Matrix<T>) -> Result<T> {
    if t.shape() != f.shape() {
        return Err(shape(format!("{:?}", f.shape()), format!("{:?}", t.shape())));
    }
    if t.rows() == 0 {
        return Err(invalid("empty embedding"));
    }
    Ok(t.squared_distance(f) / T::of(t.rows() as f64))
}

pub fn batch_loss<T: Scalar>(pairs: &[(EmbeddingMatrix<T>, EmbeddingMatrix<T>)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(invalid("empty batch"));
    }
    let mut total = T::zero();
    for (t, f) in pairs {
        total += embedding_error(t, f)?;
    }
    Ok(total / T::of(pairs.len() as f64))
}

fn check_dim<T: Scalar>(pairs: &[&TrainPair<T>], d: usize) -> Result<()> {
    match pairs.iter().find(|p| p.dim() != d) {
        Some(p) => Err(shape(format!("dimension {d}"), p.dim().to_string())),
        None => Ok(()),
    }
}

/// Batch loss and its gradient with respect to every entry of `theta`.
pub(crate) fn loss_and_gradient<T: Scalar>(
    batch: &[&TrainPair<T>],
    theta: &AttentionParams<T>,
) -> Result<(T, AttentionParams<T>)> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let d = theta.dim();
    check_dim(batch, d)?;
    let b = T::of(batch.len() as f64);
    let mut grad = AttentionParams::zeros(d);
    let mut loss = T::zero();
    for pair in batch {
        let cache = pair.forward(theta)?;
        let target = pair.finetuned.values();
        let n = T::of(target.rows() as f64);
        loss += cache.output.squared_distance(target) / n;

        let mut g_out = cache.output.clone();
        g_out.scaled_add(-T::one(), target);
        g_out.scale(T::of(2.0) / (b * n));

        let g_attended = g_out.matmul_t(&cache.values)?;
        let g_values = cache.attended.t_matmul(&g_out)?;
        let g_queries = g_attended.matmul(&cache.keys)?;
        let g_keys = g_attended.t_matmul(&cache.queries)?;

        let e = pair.source.values();
        grad.w_k.add_assign(&e.t_matmul(&g_keys)?);
        grad.w_q.add_assign(&e.t_matmul(&g_queries)?);
        grad.w_v.add_assign(&e.t_matmul(&g_values)?);
        for (acc, g) in [(&mut grad.b_k, &g_keys), (&mut grad.b_q, &g_queries), (&mut grad.b_v, &g_values)] {
            acc.iter_mut().zip(g.column_sums()).for_each(|(a, s)| *a += s);
        }
    }
    Ok((loss / b, grad))
}

pub fn loss_gradient<T: Scalar>(batch: &[&TrainPair<T>], theta: &AttentionParams<T>) -> Result<AttentionParams<T>> {
    loss_and_gradient(batch, theta).map(|(_, g)| g)
}

/// Batch loss of `theta` over `pairs`; the mean per-graph error.
pub fn dataset_loss<T: Scalar>(pairs: &[TrainPair<T>], theta: &AttentionParams<T>) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("empty batch"));
    }
    let mut total = 0.0;
    for pair in pairs {
        let cache = pair.forward(theta)?;
        total += matrix_error(&cache.output, pair.finetuned.values())?.to_f64_lossy();
    }
    Ok(total / pairs.len() as f64)
}

/// Shuffled minibatch SGD for a fixed epoch budget, keeping the parameters
/// with the lowest validation loss (training loss when `val` is empty). The
/// initial parameters are a candidate too.
pub fn train_transformer<T: Scalar>(
    train: &[TrainPair<T>],
    val: &[TrainPair<T>],
    cfg: &TransformTrainConfig,
) -> Result<TransformTrainOutcome<T>> {
    cfg.validate()?;
    let Some(first) = train.first() else {
        return Err(invalid("no training pairs"));
    };
    let d = first.dim();
    check_dim(&train.iter().chain(val).collect::<Vec<_>>(), d)?;

    let mut theta = init_params::<T>(d, cfg.seed)?;
    let mut best = theta.clone();
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let train_loss = dataset_loss(train, &theta)?;
    let val_loss = if val.is_empty() { None } else { Some(dataset_loss(val, &theta)?) };
    history.push(EpochLoss { epoch: 0, train_loss, val_loss });
    let mut best_loss = val_loss.unwrap_or(train_loss);
    let mut diverged = false;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let lr = T::of(cfg.learning_rate);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainPair<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let (_, mut grad) = loss_and_gradient(&batch, &theta)?;
            if let Some(cap) = cfg.max_grad_norm {
                let norm = grad.norm_squared().to_f64_lossy().sqrt();
                if norm > cap {
                    grad.scale(T::of(cap / norm));
                }
            }
            theta.scaled_add(-lr, &grad);
        }
        let train_loss = dataset_loss(train, &theta)?;
        let val_loss = if val.is_empty() { None } else { Some(dataset_loss(val, &theta)?) };
        history.push(EpochLoss { epoch, train_loss, val_loss });
        let current = val_loss.unwrap_or(train_loss);
        if !current.is_finite() || !train_loss.is_finite() || !theta.all_finite() {
            log::warn!("transform training diverged at epoch {epoch}");
            diverged = true;
            break;
        }
        if !(current >= best_loss) {
            best = theta.clone();
            best_epoch = epoch;
            best_loss = current;
        }
    }
    Ok(TransformTrainOutcome { params: best, history, best_epoch, best_loss, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Provenance;
    use crate::transform::apply;
    use rand::{Rng, SeedableRng};

    fn emb(m: Matrix<f64>) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::new(m, Provenance::Source).unwrap()
    }

    fn random_pair(n: usize, d: usize, rng: &mut ChaCha8Rng) -> TrainPair<f64> {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let mut m = || Matrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
        let (s, f) = (m(), m());
        TrainPair::new(Graph::new(n, edges).unwrap(), emb(s), emb(f)).unwrap()
    }

    fn random_theta(d: usize, rng: &mut ChaCha8Rng) -> AttentionParams<f64> {
        let mut t = AttentionParams::zeros(d);
        for block in t.flat_blocks_mut() {
            block.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        t
    }

    #[test]
    fn embedding_error_examples() {
        let t = emb(Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let f = emb(Matrix::zeros(1, 2));
        assert_eq!(embedding_error(&t, &f).unwrap(), 5.0);
        assert_eq!(embedding_error(&t, &t).unwrap(), 0.0);
        let t = emb(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        assert_eq!(embedding_error(&t, &emb(Matrix::zeros(2, 2))).unwrap(), 1.0);
        assert!(embedding_error(&t, &f).is_err());
    }

    #[test]
    fn batch_loss_is_mean() {
        let z = emb(Matrix::zeros(1, 2));
        let a = emb(Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let b = emb(Matrix::from_rows(&[vec![1.0, 1.4142135623730951]]).unwrap());
        let loss = batch_loss(&[(a.clone(), z.clone()), (b, z.clone())]).unwrap();
        assert!((loss - 4.0).abs() < 1e-12);
        assert_eq!(batch_loss(&[(a.clone(), z.clone())]).unwrap(), 5.0);
        assert_eq!(batch_loss(&[(a.clone(), a.clone()), (z.clone(), z)]).unwrap(), 0.0);
        assert!(batch_loss::<f64>(&[]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = [random_pair(4, 3, &mut rng), random_pair(4, 3, &mut rng)];
        let batch: Vec<_> = pairs.iter().collect();
        let theta = random_theta(3, &mut rng);
        let grad = loss_gradient(&batch, &theta).unwrap();
        let h = 1e-5;
        let grad_blocks: Vec<Vec<f64>> = grad.flat_blocks().map(<[f64]>::to_vec).collect();
        for (block, analytic) in grad_blocks.iter().enumerate() {
            for (i, &g) in analytic.iter().enumerate() {
                let mut plus = theta.clone();
                plus.flat_blocks_mut()[block][i] += h;
                let mut minus = theta.clone();
                minus.flat_blocks_mut()[block][i] -= h;
                let fd = (loss_and_gradient(&batch, &plus).unwrap().0 - loss_and_gradient(&batch, &minus).unwrap().0)
                    / (2.0 * h);
                let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);
                assert!(rel < 1e-4, "block {block} entry {i}: analytic {g}, numeric {fd}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let theta = random_theta(3, &mut rng);
        let p = random_pair(5, 3, &mut rng);
        let out = apply(p.graph(), p.source(), &theta).unwrap();
        let fit = TrainPair::new(p.graph().clone(), p.source().clone(), out).unwrap();
        let grad = loss_gradient(&[&fit], &theta).unwrap();
        assert!(grad.norm_squared() < 1e-20);
    }

    #[test]
    fn batch_gradient_is_mean_of_singles() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, q) = (random_pair(4, 2, &mut rng), random_pair(6, 2, &mut rng));
        let theta = random_theta(2, &mut rng);
        let both = loss_gradient(&[&p, &q], &theta).unwrap();
        let mut mean = loss_gradient(&[&p], &theta).unwrap();
        mean.scaled_add(1.0, &loss_gradient(&[&q], &theta).unwrap());
        mean.scale(0.5);
        for (a, b) in both.flat_blocks().zip(mean.flat_blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_step_decreases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let pairs = [random_pair(5, 3, &mut rng), random_pair(3, 3, &mut rng)];
            let batch: Vec<_> = pairs.iter().collect();
            let theta = random_theta(3, &mut rng);
            let (before, grad) = loss_and_gradient(&batch, &theta).unwrap();
            let mut stepped = theta.clone();
            stepped.scaled_add(-1e-6, &grad);
            let (after, _) = loss_and_gradient(&batch, &stepped).unwrap();
            assert!(after < before);
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs = vec![random_pair(4, 3, &mut rng)];
        let cfg = TransformTrainConfig { epochs: 0, seed: 4, ..Default::default() };
        let out = train_transformer(&pairs, &[], &cfg).unwrap();
        assert_eq!(out.params, init_params(3, 4).unwrap());
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].epoch, 0);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pairs: Vec<_> = (0..12).map(|_| random_pair(5, 3, &mut rng)).collect();
        let cfg = TransformTrainConfig { epochs: 40, batch_size: 4, learning_rate: 0.01, seed: 2, max_grad_norm: None };
        let a = train_transformer(&pairs[..10], &pairs[10..], &cfg).unwrap();
        let b = train_transformer(&pairs[..10], &pairs[10..], &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
        let best = a.history.iter().filter_map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
        assert!(a.best_loss <= best);
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pairs = vec![random_pair(4, 3, &mut rng), random_pair(4, 2, &mut rng)];
        assert!(train_transformer(&pairs, &[], &TransformTrainConfig::default()).is_err());
    }
}
