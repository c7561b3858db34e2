//! Node embedding matrices and their on-disk formats.
//!
//! Text: a `n d` header line followed by `n` lines of `d` space-separated
//! decimals. Binary (`EMBE1`): magic, provenance byte, `n` and `d` as
//! little-endian `u64`, then `n·d` little-endian `f64` values in row-major
//! order.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const EMBEDDING_MAGIC: &[u8; 5] = b"EMBE1";

/// Which pipeline stage produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Source,
    Initial,
    Target,
    Finetuned,
    Transformed,
}

impl Provenance {
    pub const ALL: [Provenance; 5] = [
        Provenance::Source,
        Provenance::Initial,
        Provenance::Target,
        Provenance::Finetuned,
        Provenance::Transformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Source => "source",
            Provenance::Initial => "initial",
            Provenance::Target => "target",
            Provenance::Finetuned => "finetuned",
            Provenance::Transformed => "transformed",
        }
    }

    fn code(self) -> u8 {
        Self::ALL.iter().position(|&p| p == self).unwrap() as u8
    }

    fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown provenance code {code}")))
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown provenance {s:?}")))
    }
}

/// `n × d` node embeddings; row `i` belongs to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    values: Matrix<T>,
    provenance: Provenance,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(values: Matrix<T>, provenance: Provenance) -> Result<Self> {
        if !values.all_finite() {
            return Err(invalid("embedding contains non-finite values"));
        }
        Ok(Self { values, provenance })
    }

    pub fn node_count(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn into_values(self) -> Matrix<T> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        write_matrix_text(&self.values, &mut w)
    }

    pub fn read_text(r: impl BufRead, provenance: Provenance) -> Result<Self> {
        let mut lines = r.lines();
        let values = read_matrix_text(&mut lines)?;
        Self::new(values, provenance)
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(EMBEDDING_MAGIC)?;
        w.write_all(&[self.provenance.code()])?;
        write_matrix_binary(&self.values, &mut w)
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != EMBEDDING_MAGIC {
            return Err(Error::Format(format!("bad embedding magic {magic:?}")));
        }
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let provenance = Provenance::from_code(code[0])?;
        let values = read_matrix_binary(&mut r)?;
        Self::new(values, provenance)
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            values: self.values.cast(),
            provenance: self.provenance,
        }
    }
}

pub(crate) fn write_matrix_text<T: Scalar>(m: &Matrix<T>, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{} {}", m.rows(), m.cols())?;
    write_rows_text(m, w)
}

pub(crate) fn write_rows_text<T: Scalar>(m: &Matrix<T>, w: &mut impl Write) -> Result<()> {
    for row in m.iter_rows() {
        let mut first = true;
        for x in row {
            if !first {
                w.write_all(b" ")?;
            }
            first = false;
            write!(w, "{}", x.to_f64_lossy())?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub(crate) fn parse_floats<T: Scalar>(line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map(T::of)
                .map_err(|_| Error::Format(format!("expected a number, found {t:?}")))
        })
        .collect()
}

pub(crate) fn read_matrix_text<T: Scalar>(
    lines: &mut impl Iterator<Item = std::io::Result<String>>,
) -> Result<Matrix<T>> {
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing `n d` header".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [n, d] = dims[..] else {
        return Err(Error::Format(format!("bad header {header:?}")));
    };
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("expected {n} rows, found {i}")))??;
        let row = parse_floats::<T>(&line)?;
        if row.len() != d {
            return Err(Error::Format(format!("row {i} has {} values, expected {d}", row.len())));
        }
        data.extend(row);
    }
    Matrix::from_vec(n, d, data)
}

pub(crate) fn write_matrix_binary<T: Scalar>(m: &Matrix<T>, w: &mut impl Write) -> Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    write_f64s(m.as_slice(), w)
}

pub(crate) fn write_f64s<T: Scalar>(xs: &[T], w: &mut impl Write) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<T: Scalar>(r: &mut impl Read, count: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut b)?;
        out.push(T::of(f64::from_le_bytes(b)));
    }
    Ok(out)
}

pub(crate) fn read_matrix_binary<T: Scalar>(r: &mut impl Read) -> Result<Matrix<T>> {
    let n = read_u64(r)? as usize;
    let d = read_u64(r)? as usize;
    let count = n
        .checked_mul(d)
        .filter(|&c| c <= 1 << 32)
        .ok_or_else(|| Error::Format(format!("implausible matrix shape {n}x{d}")))?;
    Matrix::from_vec(n, d, read_f64s(r, count)?)
}
