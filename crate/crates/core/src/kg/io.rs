//! KG model files: the embedding container followed by a relation block.
//!
//! Binary layout after the `EMBE1` container: `REL1`, model code `u8`, norm
//! order `u8`, tensor count `u8`, each tensor as `rows u64, cols u64, f64…`,
//! then an aux flag `u8` and, when set, the aux matrix in the same layout.

use std::io::{BufRead, Read, Write};

use super::{EntityAuxParams, KgModel, KgModelKind, NormOrder, RelationParams};
use crate::embedding::{
    read_matrix_binary, read_matrix_text, write_matrix_binary, write_matrix_text, write_rows_text,
    EmbeddingMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const RELATION_MAGIC: &[u8; 4] = b"REL1";

impl<T: Scalar> KgModel<T> {
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        self.entities.write_binary(&mut w)?;
        w.write_all(RELATION_MAGIC)?;
        let tensors = self.relation.tensors();
        w.write_all(&[self.kind().code(), u8::from(self.norm), tensors.len() as u8])?;
        for (_, m) in &tensors {
            write_matrix_binary(m, &mut w)?;
        }
        match &self.aux.values {
            Some(a) => {
                w.write_all(&[1])?;
                write_matrix_binary(a, &mut w)?;
            }
            None => w.write_all(&[0])?,
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let entities = EmbeddingMatrix::read_binary(&mut r)?;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RELATION_MAGIC {
            return Err(Error::Format("missing relation block".into()));
        }
        let mut head = [0u8; 3];
        r.read_exact(&mut head)?;
        let kind = KgModelKind::from_code(head[0])?;
        let norm = NormOrder::try_from(head[1])?;
        let tensors = (0..head[2]).map(|_| read_matrix_binary(&mut r)).collect::<Result<Vec<_>>>()?;
        let relation = RelationParams::from_tensors(kind, tensors)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let aux = match flag[0] {
            0 => None,
            1 => Some(read_matrix_binary(&mut r)?),
            f => return Err(Error::Format(format!("bad aux flag {f}"))),
        };
        Self::assemble(entities, relation, norm, aux)
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        self.entities.write_text(&mut w)?;
        let tensors = self.relation.tensors();
        writeln!(w, "relation {} {} {}", self.kind(), u8::from(self.norm), tensors.len())?;
        for (name, m) in &tensors {
            writeln!(w, "{name} {} {}", m.rows(), m.cols())?;
            write_rows_text(m, &mut w)?;
        }
        match &self.aux.values {
            Some(a) => {
                write!(w, "aux ")?;
                write_matrix_text(a, &mut w)?;
            }
            None => writeln!(w, "aux none")?,
        }
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let entities_values: Matrix<T> = read_matrix_text(&mut lines)?;
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Format("truncated KG model file".into()))?.map_err(Error::from)
        };
        let header = next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let ["relation", kind, norm, count] = parts[..] else {
            return Err(Error::Format(format!("bad relation header {header:?}")));
        };
        let kind: KgModelKind = kind.parse()?;
        let norm = NormOrder::try_from(norm.parse::<u8>().map_err(|_| Error::Format("bad norm".into()))?)?;
        let count: usize = count.parse().map_err(|_| Error::Format("bad tensor count".into()))?;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            // "<name> rows cols" followed by rows; reuse the matrix reader on
            // a rewritten header.
            let h = next()?;
            let dims: Vec<&str> = h.split_whitespace().skip(1).collect();
            let mut block = vec![Ok(dims.join(" "))];
            let rows: usize = dims.first().and_then(|x| x.parse().ok()).ok_or_else(|| Error::Format(format!("bad tensor header {h:?}")))?;
            for _ in 0..rows {
                block.push(Ok(next()?));
            }
            tensors.push(read_matrix_text(&mut block.into_iter())?);
        }
        let aux_header = next()?;
        let aux = match aux_header.trim() {
            "aux none" => None,
            h if h.starts_with("aux ") => {
                let dims = h["aux ".len()..].to_string();
                let rows: usize = dims.split_whitespace().next().and_then(|x| x.parse().ok()).ok_or_else(|| Error::Format(format!("bad aux header {h:?}")))?;
                let mut block = vec![Ok(dims)];
                for _ in 0..rows {
                    block.push(Ok(next()?));
                }
                Some(read_matrix_text(&mut block.into_iter())?)
            }
            h => return Err(Error::Format(format!("bad aux header {h:?}"))),
        };
        let relation = RelationParams::from_tensors(kind, tensors)?;
        let provenance = crate::embedding::Provenance::Target;
        Self::assemble(EmbeddingMatrix::new(entities_values, provenance)?, relation, norm, aux)
    }

    fn assemble(
        entities: EmbeddingMatrix<T>,
        relation: RelationParams<T>,
        norm: NormOrder,
        aux: Option<Matrix<T>>,
    ) -> Result<Self> {
        if relation.dim() != entities.dim() {
            return Err(Error::Format("relation and entity dimensions differ".into()));
        }
        if relation.kind().needs_aux() != aux.is_some() {
            return Err(Error::Format(format!("{}: aux block presence mismatch", relation.kind())));
        }
        if let Some(a) = &aux {
            if a.shape() != entities.values().shape() {
                return Err(Error::Format("aux shape differs from entity shape".into()));
            }
        }
        Ok(Self {
            entities,
            aux: EntityAuxParams { values: aux },
            relation,
            norm,
            loss_history: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::kg::{train, KgInit, KgTrainConfig};

    #[test]
    fn every_kind_round_trips() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let cfg = KgTrainConfig { epochs: 3, norm_order: NormOrder::L1, ..KgTrainConfig::default() };
        for kind in KgModelKind::ALL {
            let mut m = train::<f64>(&g, kind, KgInit::Fresh { dim: 3 }, &cfg).unwrap();
            m.loss_history.clear();
            let mut bin = Vec::new();
            m.write_binary(&mut bin).unwrap();
            assert_eq!(KgModel::<f64>::read_binary(&bin[..]).unwrap(), m);

            let mut txt = Vec::new();
            m.write_text(&mut txt).unwrap();
            let back = KgModel::<f64>::read_text(&txt[..]).unwrap();
            assert_eq!(back.relation, m.relation);
            assert_eq!(back.aux, m.aux);
            assert_eq!(back.entities.values(), m.entities.values());
        }
    }

    #[test]
    fn truncated_files_fail() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let m = train::<f64>(&g, KgModelKind::TransD, KgInit::Fresh { dim: 2 }, &KgTrainConfig { epochs: 1, ..Default::default() }).unwrap();
        let mut bin = Vec::new();
        m.write_binary(&mut bin).unwrap();
        assert!(KgModel::<f64>::read_binary(&bin[..bin.len() - 3]).is_err());
    }
}
