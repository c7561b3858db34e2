use std::io::{Read, Write};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{read_f64s, read_u64, write_f64s};
use crate::error::{invalid, shape, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const PARAMS_MAGIC: &[u8; 5] = b"EMBR1";

/// Weights and biases of the three affine maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<T> {
    pub w_k: Matrix<T>,
    pub w_q: Matrix<T>,
    pub w_v: Matrix<T>,
    pub b_k: Vec<T>,
    pub b_q: Vec<T>,
    pub b_v: Vec<T>,
}

pub fn init_params<T: Scalar>(d: usize, seed: u64) -> Result<AttentionParams<T>> {
    if d < 1 {
        return Err(invalid("attention dimension must be at least 1"));
    }
    let bound = (6.0 / (2.0 * d as f64)).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = || Matrix::from_fn(d, d, |_, _| T::of(dist.sample(&mut rng)));
    let (w_k, w_q, w_v) = (weights(), weights(), weights());
    Ok(AttentionParams {
        w_k,
        w_q,
        w_v,
        b_k: vec![T::zero(); d],
        b_q: vec![T::zero(); d],
        b_v: vec![T::zero(); d],
    })
}

impl<T: Scalar> AttentionParams<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            w_k: Matrix::zeros(d, d),
            w_q: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            b_k: vec![T::zero(); d],
            b_q: vec![T::zero(); d],
            b_v: vec![T::zero(); d],
        }
    }

    /// `W = I`, `b = 0` for all three maps.
    pub fn identity(d: usize) -> Self {
        Self {
            w_k: Matrix::identity(d),
            w_q: Matrix::identity(d),
            w_v: Matrix::identity(d),
            ..Self::zeros(d)
        }
    }

    pub fn dim(&self) -> usize {
        self.b_k.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (name, w) in [("w_k", &self.w_k), ("w_q", &self.w_q), ("w_v", &self.w_v)] {
            if w.shape() != (d, d) {
                return Err(shape(format!("{name} {d}x{d}"), format!("{:?}", w.shape())));
            }
        }
        for (name, b) in [("b_q", &self.b_q), ("b_v", &self.b_v)] {
            if b.len() != d {
                return Err(shape(format!("{name} of length {d}"), b.len().to_string()));
            }
        }
        if !self.all_finite() {
            return Err(invalid("attention parameters must be finite"));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.w_k.all_finite()
            && self.w_q.all_finite()
            && self.w_v.all_finite()
            && self.biases().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn biases(&self) -> impl Iterator<Item = &Vec<T>> {
        [&self.b_k, &self.b_q, &self.b_v].into_iter()
    }

    /// `self += alpha · other`, block by block.
    pub fn scaled_add(&mut self, alpha: T, other: &Self) {
        self.w_k.scaled_add(alpha, &other.w_k);
        self.w_q.scaled_add(alpha, &other.w_q);
        self.w_v.scaled_add(alpha, &other.w_v);
        for (b, o) in [
            (&mut self.b_k, &other.b_k),
            (&mut self.b_q, &other.b_q),
            (&mut self.b_v, &other.b_v),
        ] {
            crate::scalar::axpy(alpha, o, b);
        }
    }

    pub fn scale(&mut self, alpha: T) {
        self.w_k.scale(alpha);
        self.w_q.scale(alpha);
        self.w_v.scale(alpha);
        for b in [&mut self.b_k, &mut self.b_q, &mut self.b_v] {
            b.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// Squared Frobenius norm over all six blocks.
    pub fn norm_squared(&self) -> T {
        self.flat_blocks().map(|b| crate::scalar::dot(b, b)).sum()
    }

    /// The six blocks in storage order: `W_K, W_Q, W_V, b_K, b_Q, b_V`.
    pub fn flat_blocks(&self) -> impl Iterator<Item = &[T]> {
        [
            self.w_k.as_slice(),
            self.w_q.as_slice(),
            self.w_v.as_slice(),
            &self.b_k[..],
            &self.b_q[..],
            &self.b_v[..],
        ]
        .into_iter()
    }

    pub fn flat_blocks_mut(&mut self) -> [&mut [T]; 6] {
        [
            self.w_k.as_mut_slice(),
            self.w_q.as_mut_slice(),
            self.w_v.as_mut_slice(),
            &mut self.b_k[..],
            &mut self.b_q[..],
            &mut self.b_v[..],
        ]
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(PARAMS_MAGIC)?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        for block in self.flat_blocks() {
            write_f64s(block, &mut w)?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != PARAMS_MAGIC {
            return Err(Error::Format("not an attention parameter file".into()));
        }
        let d = read_u64(&mut r)? as usize;
        if d == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let mut weights = || -> Result<Matrix<T>> { Matrix::from_vec(d, d, read_f64s(&mut r, d * d)?) };
        let (w_k, w_q, w_v) = (weights()?, weights()?, weights()?);
        let b_k = read_f64s(&mut r, d)?;
        let b_q = read_f64s(&mut r, d)?;
        let b_v = read_f64s(&mut r, d)?;
        let p = Self { w_k, w_q, w_v, b_k, b_q, b_v };
        p.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(p)
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.cast::<f64>())?;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> AttentionParams<U> {
        let v = |b: &[T]| b.iter().map(|x| U::of(x.to_f64_lossy())).collect();
        AttentionParams {
            w_k: self.w_k.cast(),
            w_q: self.w_q.cast(),
            w_v: self.w_v.cast(),
            b_k: v(&self.b_k),
            b_q: v(&self.b_q),
            b_v: v(&self.b_v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params::<f64>(4, 7).unwrap();
        assert_eq!(a, init_params::<f64>(4, 7).unwrap());
        assert_ne!(a, init_params::<f64>(4, 8).unwrap());
        let bound = (6.0f64 / 8.0).sqrt();
        for w in [&a.w_k, &a.w_q, &a.w_v] {
            assert!(w.as_slice().iter().all(|x| x.abs() <= bound));
        }
        assert!(a.b_k.iter().chain(&a.b_q).chain(&a.b_v).all(|&x| x == 0.0));
        assert!(init_params::<f64>(0, 1).is_err());
    }

    #[test]
    fn binary_and_json_round_trip() {
        let mut p = init_params::<f64>(3, 2).unwrap();
        p.b_v = vec![0.5, -1.0, 2.0];
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"EMBR1");
        assert_eq!(buf.len(), 5 + 8 + 8 * (3 * 9 + 3 * 3));
        assert_eq!(AttentionParams::<f64>::read_binary(&buf[..]).unwrap(), p);
        assert!(AttentionParams::<f64>::read_binary(&buf[..buf.len() - 1]).is_err());

        let mut json = Vec::new();
        p.write_json(&mut json).unwrap();
        let back: AttentionParams<f64> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, p);
    }
}
