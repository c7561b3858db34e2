//! Undirected homogeneous graphs and their single-relation triple view.

mod io;
mod split;
pub mod synthetic;

use serde::{Deserialize, Serialize};

pub use io::{load_communities, load_edge_list, parse_edge_list};
pub use split::{split_dataset, split_edges, DatasetPartition, EdgeSplit, GraphDataset};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// The only relation id in a homogeneous graph.
pub const RELATION: u32 = 0;

/// Unweighted undirected graph on nodes `0..n`.
///
/// Edges are stored once as `(min, max)` pairs in sorted order; neighbor
/// lists are sorted as well.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    community_id: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    community_id: Option<u64>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = crate::Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Ok(Graph::new(r.node_count, r.edges)?.with_community(r.community_id))
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            node_count: g.node_count,
            edges: g.edges,
            community_id: g.community_id,
        }
    }
}

impl Graph {
    /// Builds a graph, canonicalizing and deduplicating edges.
    ///
    /// Self-loops and out-of-range endpoints are rejected.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(invalid(format!("self-loop on node {u}")));
            }
            if u >= node_count || v >= node_count {
                return Err(invalid(format!(
                    "edge ({u}, {v}) out of range for {node_count} nodes"
                )));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut neighbors = vec![Vec::new(); node_count];
        for &(u, v) in &canon {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: canon,
            neighbors,
            community_id: None,
        })
    }

    pub fn with_community(mut self, community_id: Option<u64>) -> Self {
        self.community_id = community_id;
        self
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count && self.neighbors[u].binary_search(&v).is_ok()
    }

    pub fn community_id(&self) -> Option<u64> {
        self.community_id
    }

    /// Edge density `m / (n(n-1)/2)`.
    pub fn density(&self) -> f64 {
        let n = self.node_count as f64;
        if self.node_count < 2 {
            return 0.0;
        }
        self.edges.len() as f64 / (n * (n - 1.0) / 2.0)
    }

    /// Same node set, different edges.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Ok(Graph::new(self.node_count, edges)?.with_community(self.community_id))
    }

    /// Relabels node `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.node_count {
            return Err(invalid("permutation length differs from node count"));
        }
        self.with_edges(self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }
}

/// Dense symmetric 0/1 adjacency matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix<T>(Matrix<T>);

impl<T: Scalar> AdjacencyMatrix<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }

    /// Wraps an arbitrary square matrix after checking the adjacency invariants.
    pub fn from_matrix(m: Matrix<T>) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(invalid("adjacency matrix must be square"));
        }
        for i in 0..n {
            if m[(i, i)] != T::zero() {
                return Err(invalid("adjacency diagonal must be zero"));
            }
            for j in 0..n {
                let x = m[(i, j)];
                if x != m[(j, i)] || (x != T::zero() && x != T::one()) {
                    return Err(invalid("adjacency must be symmetric with 0/1 entries"));
                }
            }
        }
        Ok(Self(m))
    }
}

pub fn adjacency<T: Scalar>(g: &Graph) -> AdjacencyMatrix<T> {
    let mut m = Matrix::zeros(g.node_count(), g.node_count());
    for &(u, v) in g.edges() {
        m[(u, v)] = T::one();
        m[(v, u)] = T::one();
    }
    AdjacencyMatrix(m)
}

/// `(head, relation, tail)` fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: u32,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, tail: usize) -> Self {
        Self {
            head,
            relation: RELATION,
            tail,
        }
    }
}

/// Both orientations of every undirected edge, edge by edge.
pub fn to_triples(g: &Graph) -> Vec<Triple> {
    edge_triples(g.edges())
}

pub(crate) fn edge_triples(edges: &[(usize, usize)]) -> Vec<Triple> {
    edges
        .iter()
        .flat_map(|&(u, v)| [Triple::new(u, v), Triple::new(v, u)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn adjacency_examples() {
        let a = adjacency::<f64>(&Graph::new(2, [(0, 1)]).unwrap());
        assert_eq!(a.matrix().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        let a = adjacency::<f64>(&Graph::new(2, []).unwrap());
        assert_eq!(a.matrix().as_slice(), &[0.0; 4]);
        let a = adjacency::<f32>(&path3());
        assert_eq!(
            a.matrix().as_slice(),
            &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn triples_examples() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(to_triples(&g), vec![Triple::new(0, 1), Triple::new(1, 0)]);
        assert!(to_triples(&Graph::new(0, []).unwrap()).is_empty());
        assert_eq!(to_triples(&path3()).len(), 4);
    }

    #[test]
    fn canonical_storage() {
        let g = Graph::new(3, [(2, 1), (1, 2), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(g.has_edge(2, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(1, 3)]).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_neighbors() {
        let g = path3().with_community(Some(9));
        let back: Graph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.neighbors(1), &[0, 2]);
    }
}
