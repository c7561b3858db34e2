//! Knowledge-graph embedding objectives specialised to one symmetric
//! relation. Relation parameters are drawn once and frozen; only entity
//! vectors (and per-entity auxiliary vectors where the model has them) are
//! trained.

mod io;
mod sampling;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use sampling::negative_sample;
pub use train::{margin_loss_grad, train, KgInit, KgModel, KgTrainConfig, SparseGrad};

use crate::error::{invalid, shape, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgModelKind {
    TransE,
    TransH,
    TransD,
    DistMult,
    Rescal,
    SimplE,
}

impl KgModelKind {
    pub const ALL: [KgModelKind; 6] = [
        KgModelKind::TransE,
        KgModelKind::TransH,
        KgModelKind::TransD,
        KgModelKind::DistMult,
        KgModelKind::Rescal,
        KgModelKind::SimplE,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KgModelKind::TransE => "transe",
            KgModelKind::TransH => "transh",
            KgModelKind::TransD => "transd",
            KgModelKind::DistMult => "distmult",
            KgModelKind::Rescal => "rescal",
            KgModelKind::SimplE => "simple",
        }
    }

    /// Distance-based models whose entity rows are kept inside the unit ball.
    pub fn is_translational(self) -> bool {
        matches!(self, KgModelKind::TransE | KgModelKind::TransH | KgModelKind::TransD)
    }

    /// TransD projection vectors and SimplE second embeddings.
    pub fn needs_aux(self) -> bool {
        matches!(self, KgModelKind::TransD | KgModelKind::SimplE)
    }

    fn code(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown model code {code}")))
    }
}

impl std::fmt::Display for KgModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KgModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| invalid(format!("unknown KG model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum NormOrder {
    L1,
    L2,
}

impl TryFrom<u8> for NormOrder {
    type Error = Error;

    fn try_from(p: u8) -> Result<Self> {
        match p {
            1 => Ok(NormOrder::L1),
            2 => Ok(NormOrder::L2),
            _ => Err(invalid(format!("norm order must be 1 or 2, got {p}"))),
        }
    }
}

impl From<NormOrder> for u8 {
    fn from(n: NormOrder) -> u8 {
        match n {
            NormOrder::L1 => 1,
            NormOrder::L2 => 2,
        }
    }
}

/// Frozen parameters of relation 0.
#[derive(Debug, Clone, PartialEq)]
pub enum RelationParams<T> {
    TransE { r: Vec<T> },
    /// `w` has unit L2 norm.
    TransH { r: Vec<T>, w: Vec<T> },
    TransD { r: Vec<T>, r_p: Vec<T> },
    DistMult { r: Vec<T> },
    Rescal { m: Matrix<T> },
    SimplE { r: Vec<T>, r_inv: Vec<T> },
}

impl<T: Scalar> RelationParams<T> {
    /// Translations start at zero; every other tensor is drawn from
    /// `U(-0.1, 0.1)` (TransH normal renormalised, RESCAL matrix scaled to
    /// Frobenius norm `√d`).
    pub fn init(kind: KgModelKind, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("relation dimension must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-0.1..0.1)).collect() };
        let cast = |v: Vec<f64>| v.into_iter().map(T::of).collect::<Vec<T>>();
        let zero = vec![T::zero(); dim];
        Ok(match kind {
            KgModelKind::TransE => RelationParams::TransE { r: zero },
            KgModelKind::TransH => {
                let mut w = uniform(dim);
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    w.iter_mut().for_each(|x| *x /= norm);
                } else {
                    w[0] = 1.0;
                }
                RelationParams::TransH { r: zero, w: cast(w) }
            }
            KgModelKind::TransD => RelationParams::TransD { r: zero, r_p: cast(uniform(dim)) },
            KgModelKind::DistMult => RelationParams::DistMult { r: cast(uniform(dim)) },
            KgModelKind::Rescal => {
                let raw = uniform(dim * dim);
                let fro = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
                let scale = if fro > 0.0 { (dim as f64).sqrt() / fro } else { 0.0 };
                RelationParams::Rescal {
                    m: Matrix::from_vec(dim, dim, raw.into_iter().map(|x| T::of(x * scale)).collect())?,
                }
            }
            KgModelKind::SimplE => RelationParams::SimplE {
                r: cast(uniform(dim)),
                r_inv: cast(uniform(dim)),
            },
        })
    }

    /// Scores source embeddings: TransE with a zero translation, i.e. negative
    /// distance between node vectors.
    pub fn zero_translation(dim: usize) -> Self {
        RelationParams::TransE { r: vec![T::zero(); dim] }
    }

    pub fn kind(&self) -> KgModelKind {
        match self {
            RelationParams::TransE { .. } => KgModelKind::TransE,
            RelationParams::TransH { .. } => KgModelKind::TransH,
            RelationParams::TransD { .. } => KgModelKind::TransD,
            RelationParams::DistMult { .. } => KgModelKind::DistMult,
            RelationParams::Rescal { .. } => KgModelKind::Rescal,
            RelationParams::SimplE { .. } => KgModelKind::SimplE,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RelationParams::TransE { r }
            | RelationParams::TransH { r, .. }
            | RelationParams::TransD { r, .. }
            | RelationParams::DistMult { r }
            | RelationParams::SimplE { r, .. } => r.len(),
            RelationParams::Rescal { m } => m.rows(),
        }
    }

    /// Named tensors in serialization order.
    pub fn tensors(&self) -> Vec<(&'static str, Matrix<T>)> {
        let vecm = |v: &Vec<T>| Matrix::from_vec(1, v.len(), v.clone()).unwrap();
        match self {
            RelationParams::TransE { r } | RelationParams::DistMult { r } => vec![("r", vecm(r))],
            RelationParams::TransH { r, w } => vec![("r", vecm(r)), ("w", vecm(w))],
            RelationParams::TransD { r, r_p } => vec![("r", vecm(r)), ("r_p", vecm(r_p))],
            RelationParams::Rescal { m } => vec![("m", m.clone())],
            RelationParams::SimplE { r, r_inv } => vec![("r", vecm(r)), ("r_inv", vecm(r_inv))],
        }
    }

    pub fn from_tensors(kind: KgModelKind, tensors: Vec<Matrix<T>>) -> Result<Self> {
        let mut it = tensors.into_iter();
        let mut next_vec = || -> Result<Vec<T>> {
            let m = it.next().ok_or_else(|| Error::Format(format!("{kind}: missing relation tensor")))?;
            if m.rows() != 1 {
                return Err(Error::Format(format!("{kind}: relation vector must have one row")));
            }
            Ok(m.into_vec())
        };
        let rel = match kind {
            KgModelKind::TransE => RelationParams::TransE { r: next_vec()? },
            KgModelKind::TransH => RelationParams::TransH { r: next_vec()?, w: next_vec()? },
            KgModelKind::TransD => RelationParams::TransD { r: next_vec()?, r_p: next_vec()? },
            KgModelKind::DistMult => RelationParams::DistMult { r: next_vec()? },
            KgModelKind::SimplE => RelationParams::SimplE { r: next_vec()?, r_inv: next_vec()? },
            KgModelKind::Rescal => {
                let m = it.next().ok_or_else(|| Error::Format("rescal: missing matrix".into()))?;
                if m.rows() != m.cols() {
                    return Err(Error::Format("rescal: relation matrix must be square".into()));
                }
                RelationParams::Rescal { m }
            }
        };
        let d = rel.dim();
        if rel.tensors().iter().any(|(_, m)| m.cols() != d) {
            return Err(Error::Format(format!("{kind}: relation tensors disagree on dimension")));
        }
        Ok(rel)
    }
}

/// Per-entity auxiliary vectors: TransD projection vectors or SimplE second
/// embeddings. `None` for models without them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntityAuxParams<T> {
    pub values: Option<Matrix<T>>,
}

impl<T: Scalar> EntityAuxParams<T> {
    pub fn none() -> Self {
        Self { values: None }
    }

    pub fn row(&self, i: usize) -> Option<&[T]> {
        self.values.as_ref().map(|m| m.row(i))
    }
}

/// One entity as seen by a scorer.
#[derive(Debug, Clone, Copy)]
pub struct Entity<'a, T> {
    pub vec: &'a [T],
    pub aux: Option<&'a [T]>,
}

impl<'a, T> Entity<'a, T> {
    pub fn plain(vec: &'a [T]) -> Self {
        Self { vec, aux: None }
    }
}

/// Gradient of a score with respect to both entities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad<T> {
    pub score: T,
    pub head: Vec<T>,
    pub tail: Vec<T>,
    pub head_aux: Option<Vec<T>>,
    pub tail_aux: Option<Vec<T>>,
}

fn check_dims<T: Scalar>(rel: &RelationParams<T>, h: &Entity<T>, t: &Entity<T>) -> Result<()> {
    let d = rel.dim();
    for (name, e) in [("head", h), ("tail", t)] {
        if e.vec.len() != d {
            return Err(shape(format!("{name} of length {d}"), format!("{}", e.vec.len())));
        }
        match (rel.kind().needs_aux(), e.aux) {
            (true, None) => {
                return Err(invalid(format!("{} needs auxiliary entity vectors", rel.kind())))
            }
            (true, Some(a)) if a.len() != d => {
                return Err(shape(format!("{name} aux of length {d}"), format!("{}", a.len())))
            }
            _ => {}
        }
    }
    Ok(())
}

fn neg_norm<T: Scalar>(x: &[T], norm: NormOrder) -> T {
    match norm {
        NormOrder::L1 => -x.iter().map(|v| v.abs()).sum::<T>(),
        NormOrder::L2 => -dot(x, x).sqrt(),
    }
}

/// Gradient of `-‖x‖_p` with respect to `x`.
fn neg_norm_grad<T: Scalar>(x: &[T], norm: NormOrder) -> Vec<T> {
    match norm {
        NormOrder::L1 => x
            .iter()
            .map(|&v| if v > T::zero() { -T::one() } else if v < T::zero() { T::one() } else { T::zero() })
            .collect(),
        NormOrder::L2 => {
            let len = dot(x, x).sqrt();
            if len == T::zero() {
                vec![T::zero(); x.len()]
            } else {
                x.iter().map(|&v| -v / len).collect()
            }
        }
    }
}

/// `h + r_p (h_pᵀ h)`
fn transd_project<T: Scalar>(e: &[T], e_p: &[T], r_p: &[T]) -> Vec<T> {
    let s = dot(e_p, e);
    e.iter().zip(r_p).map(|(&x, &rp)| x + rp * s).collect()
}

/// `e - w (wᵀ e)`
fn transh_project<T: Scalar>(e: &[T], w: &[T]) -> Vec<T> {
    let s = dot(w, e);
    e.iter().zip(w).map(|(&x, &wk)| x - wk * s).collect()
}

/// Plausibility of `⟨h, 0, t⟩`; higher is more plausible.
pub fn score<T: Scalar>(rel: &RelationParams<T>, norm: NormOrder, h: Entity<T>, t: Entity<T>) -> Result<T> {
    check_dims(rel, &h, &t)?;
    Ok(score_unchecked(rel, norm, h, t))
}

pub(crate) fn score_unchecked<T: Scalar>(rel: &RelationParams<T>, norm: NormOrder, h: Entity<T>, t: Entity<T>) -> T {
    let half = T::of(0.5);
    match rel {
        RelationParams::TransE { r } => {
            let x: Vec<T> = (0..r.len()).map(|k| h.vec[k] + r[k] - t.vec[k]).collect();
            neg_norm(&x, norm)
        }
        RelationParams::TransH { r, w } => {
            let hp = transh_project(h.vec, w);
            let tp = transh_project(t.vec, w);
            let x: Vec<T> = (0..r.len()).map(|k| hp[k] + r[k] - tp[k]).collect();
            neg_norm(&x, norm)
        }
        RelationParams::TransD { r, r_p } => {
            let hp = transd_project(h.vec, h.aux.unwrap(), r_p);
            let tp = transd_project(t.vec, t.aux.unwrap(), r_p);
            let x: Vec<T> = (0..r.len()).map(|k| hp[k] + r[k] - tp[k]).collect();
            neg_norm(&x, norm)
        }
        RelationParams::DistMult { r } => (0..r.len()).map(|k| h.vec[k] * r[k] * t.vec[k]).sum(),
        RelationParams::Rescal { m } => {
            (0..m.rows()).map(|i| h.vec[i] * dot(m.row(i), t.vec)).sum()
        }
        RelationParams::SimplE { r, r_inv } => {
            let (h2, t2) = (h.aux.unwrap(), t.aux.unwrap());
            let fwd: T = (0..r.len()).map(|k| h.vec[k] * r[k] * t2[k]).sum();
            let bwd: T = (0..r.len()).map(|k| t.vec[k] * r_inv[k] * h2[k]).sum();
            half * (fwd + bwd)
        }
    }
}

pub fn score_grad<T: Scalar>(
    rel: &RelationParams<T>,
    norm: NormOrder,
    h: Entity<T>,
    t: Entity<T>,
) -> Result<ScoreGrad<T>> {
    check_dims(rel, &h, &t)?;
    Ok(score_grad_unchecked(rel, norm, h, t))
}

pub(crate) fn score_grad_unchecked<T: Scalar>(
    rel: &RelationParams<T>,
    norm: NormOrder,
    h: Entity<T>,
    t: Entity<T>,
) -> ScoreGrad<T> {
    let d = rel.dim();
    let half = T::of(0.5);
    let neg = |v: &[T]| v.iter().map(|&x| -x).collect::<Vec<T>>();
    match rel {
        RelationParams::TransE { r } => {
            let x: Vec<T> = (0..d).map(|k| h.vec[k] + r[k] - t.vec[k]).collect();
            let g = neg_norm_grad(&x, norm);
            ScoreGrad { score: neg_norm(&x, norm), tail: neg(&g), head: g, head_aux: None, tail_aux: None }
        }
        RelationParams::TransH { r, w } => {
            let hp = transh_project(h.vec, w);
            let tp = transh_project(t.vec, w);
            let x: Vec<T> = (0..d).map(|k| hp[k] + r[k] - tp[k]).collect();
            let g = neg_norm_grad(&x, norm);
            // The projection is symmetric: ∂/∂h = P g.
            let pg = transh_project(&g, w);
            ScoreGrad { score: neg_norm(&x, norm), tail: neg(&pg), head: pg, head_aux: None, tail_aux: None }
        }
        RelationParams::TransD { r, r_p } => {
            let (ha, ta) = (h.aux.unwrap(), t.aux.unwrap());
            let hp = transd_project(h.vec, ha, r_p);
            let tp = transd_project(t.vec, ta, r_p);
            let x: Vec<T> = (0..d).map(|k| hp[k] + r[k] - tp[k]).collect();
            let g = neg_norm_grad(&x, norm);
            let rg = dot(r_p, &g);
            ScoreGrad {
                score: neg_norm(&x, norm),
                head: (0..d).map(|k| g[k] + ha[k] * rg).collect(),
                tail: (0..d).map(|k| -(g[k] + ta[k] * rg)).collect(),
                head_aux: Some(h.vec.iter().map(|&v| v * rg).collect()),
                tail_aux: Some(t.vec.iter().map(|&v| -v * rg).collect()),
            }
        }
        RelationParams::DistMult { r } => ScoreGrad {
            score: (0..d).map(|k| h.vec[k] * r[k] * t.vec[k]).sum(),
            head: (0..d).map(|k| r[k] * t.vec[k]).collect(),
            tail: (0..d).map(|k| r[k] * h.vec[k]).collect(),
            head_aux: None,
            tail_aux: None,
        },
        RelationParams::Rescal { m } => {
            let mt: Vec<T> = (0..d).map(|i| dot(m.row(i), t.vec)).collect();
            let mut mth = vec![T::zero(); d];
            for (i, &hi) in h.vec.iter().enumerate() {
                crate::scalar::axpy(hi, m.row(i), &mut mth);
            }
            ScoreGrad { score: dot(h.vec, &mt), head: mt, tail: mth, head_aux: None, tail_aux: None }
        }
        RelationParams::SimplE { r, r_inv } => {
            let (h2, t2) = (h.aux.unwrap(), t.aux.unwrap());
            ScoreGrad {
                score: score_unchecked(rel, norm, h, t),
                head: (0..d).map(|k| half * r[k] * t2[k]).collect(),
                tail: (0..d).map(|k| half * r_inv[k] * h2[k]).collect(),
                head_aux: Some((0..d).map(|k| half * r_inv[k] * t.vec[k]).collect()),
                tail_aux: Some((0..d).map(|k| half * r[k] * h.vec[k]).collect()),
            }
        }
    }
}
