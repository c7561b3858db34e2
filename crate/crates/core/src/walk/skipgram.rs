//! Skip-gram with negative sampling over node sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Provenance};
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::scalar::{axpy, dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate reached at the end of training (linear decay).
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            window: 5,
            negatives_per_positive: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives_per_positive == 0 {
            return Err(invalid("dim, window and negatives_per_positive must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || self.min_learning_rate < 0.0 {
            return Err(invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

/// Samples node ids proportionally to `count^0.75`.
struct UnigramSampler {
    cumulative: Vec<f64>,
}

impl UnigramSampler {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    let x = x.max(T::of(-30.0)).min(T::of(30.0));
    T::one() / (T::one() + (-x).exp())
}

/// Trains input ("center") vectors by skip-gram with negative sampling and
/// returns them as an `n × dim` source embedding.
pub fn train_skipgram<T: Scalar>(
    walks: &[Vec<usize>],
    n: usize,
    cfg: &SkipGramConfig,
) -> Result<EmbeddingMatrix<T>> {
    cfg.validate()?;
    if n == 0 {
        return Err(invalid("skip-gram needs at least one node"));
    }
    if walks.is_empty() {
        return Err(invalid("skip-gram needs at least one walk"));
    }
    if let Some(bad) = walks.iter().flatten().find(|&&v| v >= n) {
        return Err(invalid(format!("walk visits node {bad} but n = {n}")));
    }
    let d = cfg.dim;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = 0.5 / d as f64;
    let mut input = Matrix::from_fn(n, d, |_, _| T::of(init_rng.gen_range(-half..half)));
    if cfg.epochs == 0 {
        return EmbeddingMatrix::new(input, Provenance::Source);
    }
    let mut output = Matrix::<T>::zeros(n, d);

    let mut counts = vec![0u64; n];
    for &v in walks.iter().flatten() {
        counts[v] += 1;
    }
    let sampler = UnigramSampler::new(&counts);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let tokens_per_epoch: usize = walks.iter().map(Vec::len).sum();
    let total_tokens = (tokens_per_epoch * cfg.epochs) as f64;
    let mut processed = 0usize;
    let mut grad = vec![T::zero(); d];

    for _ in 0..cfg.epochs {
        for walk in walks {
            for (pos, &center) in walk.iter().enumerate() {
                let progress = processed as f64 / total_tokens;
                let lr = (cfg.learning_rate * (1.0 - progress)).max(cfg.min_learning_rate);
                let lr = T::of(lr);
                processed += 1;

                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(walk.len());
                for (ctx_pos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = T::zero());
                    for k in 0..=cfg.negatives_per_positive {
                        let (target, label) = if k == 0 {
                            (context, T::one())
                        } else {
                            let t = sampler.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, T::zero())
                        };
                        let f = sigmoid(dot(input.row(center), output.row(target)));
                        let g = (label - f) * lr;
                        axpy(g, output.row(target), &mut grad);
                        axpy(g, input.row(center), output.row_mut(target));
                    }
                    axpy(T::one(), &grad, input.row_mut(center));
                }
            }
        }
    }
    EmbeddingMatrix::new(input, Provenance::Source)
}
