use super::AttentionParams;
use crate::embedding::{EmbeddingMatrix, Provenance};
use crate::error::{shape, Result};
use crate::graph::{adjacency, AdjacencyMatrix, Graph};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub keys: Matrix<T>,
    pub queries: Matrix<T>,
    pub values: Matrix<T>,
    /// `QKᵀ + A`.
    pub attended: Matrix<T>,
    pub output: Matrix<T>,
}

fn affine<T: Scalar>(e: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Result<Matrix<T>> {
    let mut out = e.matmul(w)?;
    out.add_row_broadcast(b);
    Ok(out)
}

pub(crate) fn forward_matrix<T: Scalar>(
    a: &Matrix<T>,
    e: &Matrix<T>,
    theta: &AttentionParams<T>,
) -> Result<ForwardCache<T>> {
    let (n, d) = e.shape();
    if a.shape() != (n, n) {
        return Err(shape(format!("adjacency {n}x{n}"), format!("{:?}", a.shape())));
    }
    if theta.dim() != d {
        return Err(shape(format!("parameters of dimension {d}"), theta.dim().to_string()));
    }
    let keys = affine(e, &theta.w_k, &theta.b_k)?;
    let queries = affine(e, &theta.w_q, &theta.b_q)?;
    let values = affine(e, &theta.w_v, &theta.b_v)?;
    let mut attended = queries.matmul_t(&keys)?;
    attended.add_assign(a);
    let output = attended.matmul(&values)?;
    Ok(ForwardCache { keys, queries, values, attended, output })
}

pub fn self_attention_forward<T: Scalar>(
    a: &AdjacencyMatrix<T>,
    e: &EmbeddingMatrix<T>,
    theta: &AttentionParams<T>,
) -> Result<EmbeddingMatrix<T>> {
    let cache = forward_matrix(a.matrix(), e.values(), theta)?;
    EmbeddingMatrix::new(cache.output, Provenance::Transformed)
}

pub fn apply<T: Scalar>(
    g: &Graph,
    source: &EmbeddingMatrix<T>,
    theta: &AttentionParams<T>,
) -> Result<EmbeddingMatrix<T>> {
    if source.node_count() != g.node_count() {
        return Err(shape(
            format!("{} embedding rows", g.node_count()),
            source.node_count().to_string(),
        ));
    }
    self_attention_forward(&adjacency(g), source, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_affines_hand_case() {
        let a = AdjacencyMatrix::from_matrix(Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        let e = EmbeddingMatrix::new(Matrix::identity(2), Provenance::Source).unwrap();
        let out = self_attention_forward(&a, &e, &AttentionParams::identity(2)).unwrap();
        assert_eq!(out.values().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(out.provenance(), Provenance::Transformed);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let e = EmbeddingMatrix::new(random_matrix(4, 3, &mut rng), Provenance::Source).unwrap();
        let out = apply(&g, &e, &AttentionParams::zeros(3)).unwrap();
        assert!(out.values().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_explicit_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, d) = (5, 3);
        let g = Graph::new(n, [(0, 1), (1, 2), (3, 4), (0, 4)]).unwrap();
        let e = random_matrix(n, d, &mut rng);
        let mut theta = init_params::<f64>(d, 3).unwrap();
        for b in [&mut theta.b_k, &mut theta.b_q, &mut theta.b_v] {
            b.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        let out = apply(&g, &EmbeddingMatrix::new(e.clone(), Provenance::Source).unwrap(), &theta).unwrap();

        let proj = |w: &Matrix<f64>, b: &[f64], i: usize, j: usize| -> f64 {
            b[j] + (0..d).map(|k| e[(i, k)] * w[(k, j)]).sum::<f64>()
        };
        for i in 0..n {
            for j in 0..d {
                let mut acc = 0.0;
                for m in 0..n {
                    let logit: f64 = (0..d)
                        .map(|k| proj(&theta.w_q, &theta.b_q, i, k) * proj(&theta.w_k, &theta.b_k, m, k))
                        .sum();
                    let s = logit + if g.has_edge(i, m) { 1.0 } else { 0.0 };
                    acc += s * proj(&theta.w_v, &theta.b_v, m, j);
                }
                assert!((out.values()[(i, j)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let e = EmbeddingMatrix::new(Matrix::<f64>::zeros(2, 2), Provenance::Source).unwrap();
        assert!(apply(&g, &e, &AttentionParams::identity(2)).is_err());
        let e = EmbeddingMatrix::new(Matrix::<f64>::zeros(3, 3), Provenance::Source).unwrap();
        assert!(apply(&g, &e, &AttentionParams::identity(2)).is_err());
    }
}
