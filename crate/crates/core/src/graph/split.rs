//! Edge holdout and dataset partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{edge_triples, Graph, Triple};
use crate::error::{invalid, Result};

/// A graph with a random subset of its edges held out for link prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train_graph: Graph,
    pub held_out_edges: Vec<(usize, usize)>,
    pub seed: u64,
}

impl EdgeSplit {
    pub fn held_out_triples(&self) -> Vec<Triple> {
        edge_triples(&self.held_out_edges)
    }

    /// The original graph: training edges plus held-out edges.
    pub fn full_graph(&self) -> Result<Graph> {
        self.train_graph.with_edges(
            self.train_graph
                .edges()
                .iter()
                .chain(&self.held_out_edges)
                .copied(),
        )
    }
}

/// Moves `round(fraction * m)` uniformly chosen edges into the held-out set.
pub fn split_edges(g: &Graph, fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(invalid(format!("holdout fraction {fraction} outside [0, 1)")));
    }
    let m = g.edge_count();
    if m == 0 {
        return Err(invalid("cannot split the edges of an edgeless graph"));
    }
    let k = (fraction * m as f64).round() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held: Vec<usize> = order[..k].to_vec();
    held.sort_unstable();

    let mut is_held = vec![false; m];
    for &i in &held {
        is_held[i] = true;
    }
    let edges = g.edges();
    let train = g.with_edges((0..m).filter(|&i| !is_held[i]).map(|i| edges[i]))?;
    Ok(EdgeSplit {
        train_graph: train,
        held_out_edges: held.into_iter().map(|i| edges[i]).collect(),
        seed,
    })
}

/// An ordered collection of graphs drawn from one node-count range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    pub graphs: Vec<Graph>,
    pub size_range: (usize, usize),
    /// Community members that did not occur in the edge file.
    #[serde(default)]
    pub skipped_members: usize,
}

impl GraphDataset {
    pub fn new(size_range: (usize, usize)) -> Self {
        Self {
            graphs: Vec::new(),
            size_range,
            skipped_members: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Train/validation/test partition; `*_indices` refer to the input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPartition {
    pub train: GraphDataset,
    pub validation: GraphDataset,
    pub test: GraphDataset,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Largest-remainder apportionment of `total` items by `ratios`.
pub(crate) fn apportion(total: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    // Stable sort keeps lower indices first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

pub fn split_dataset(d: &GraphDataset, ratios: (f64, f64, f64), seed: u64) -> Result<DatasetPartition> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(invalid(format!("split ratios {r:?} must lie in [0, 1]")));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split ratios {r:?} do not sum to 1")));
    }
    if d.len() < 3 {
        return Err(invalid(format!("need at least 3 graphs to split, got {}", d.len())));
    }
    let sizes = apportion(d.len(), &r);
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut parts = Vec::with_capacity(3);
    let mut start = 0;
    for size in sizes {
        let mut idx = order[start..start + size].to_vec();
        idx.sort_unstable();
        start += size;
        parts.push(idx);
    }
    let subset = |idx: &[usize]| GraphDataset {
        graphs: idx.iter().map(|&i| d.graphs[i].clone()).collect(),
        size_range: d.size_range,
        skipped_members: 0,
    };
    let test_indices = parts.pop().unwrap();
    let validation_indices = parts.pop().unwrap();
    let train_indices = parts.pop().unwrap();
    Ok(DatasetPartition {
        train: subset(&train_indices),
        validation: subset(&validation_indices),
        test: subset(&test_indices),
        train_indices,
        validation_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn cycle(n: usize) -> Graph {
        Graph::new(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    #[test]
    fn holdout_examples() {
        let g = cycle(10);
        let s = split_edges(&g, 0.2, 1).unwrap();
        assert_eq!(s.held_out_edges.len(), 2);
        assert_eq!(s.train_graph.edge_count(), 8);
        assert_eq!(s.train_graph.node_count(), 10);

        let s = split_edges(&g, 0.0, 1).unwrap();
        assert!(s.held_out_edges.is_empty());
        assert_eq!(s.train_graph, g);

        assert_eq!(split_edges(&g, 0.2, 5).unwrap(), split_edges(&g, 0.2, 5).unwrap());
        assert!(split_edges(&g, 1.0, 1).is_err());
        assert!(split_edges(&g, -0.1, 1).is_err());
        assert!(split_edges(&Graph::new(3, []).unwrap(), 0.2, 1).is_err());
    }

    #[test]
    fn apportion_largest_remainder() {
        let r = [0.64, 0.16, 0.20];
        assert_eq!(apportion(100, &r), vec![64, 16, 20]);
        // 6.4 / 1.6 / 2.0 -> floors 6/1/2, the spare goes to the 0.6 remainder
        assert_eq!(apportion(10, &r), vec![6, 2, 2]);
        for n in 3..300 {
            assert_eq!(apportion(n, &r).iter().sum::<usize>(), n);
        }
    }

    fn dataset(k: usize) -> GraphDataset {
        GraphDataset {
            graphs: (0..k).map(|i| cycle(3 + i % 5).with_community(Some(i as u64))).collect(),
            size_range: (3, 7),
            skipped_members: 0,
        }
    }

    #[test]
    fn dataset_split_examples() {
        let p = split_dataset(&dataset(100), (0.64, 0.16, 0.20), 3).unwrap();
        assert_eq!((p.train.len(), p.validation.len(), p.test.len()), (64, 16, 20));

        let p = split_dataset(&dataset(10), (0.64, 0.16, 0.20), 3).unwrap();
        assert_eq!((p.train.len(), p.validation.len(), p.test.len()), (6, 2, 2));
        let all: BTreeSet<usize> = p
            .train_indices
            .iter()
            .chain(&p.validation_indices)
            .chain(&p.test_indices)
            .copied()
            .collect();
        assert_eq!(all.len(), 10);

        assert_eq!(
            split_dataset(&dataset(10), (0.64, 0.16, 0.20), 3).unwrap(),
            split_dataset(&dataset(10), (0.64, 0.16, 0.20), 3).unwrap()
        );
        assert!(split_dataset(&dataset(10), (0.6, 0.16, 0.20), 3).is_err());
        assert!(split_dataset(&dataset(2), (0.64, 0.16, 0.20), 3).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (2usize..25).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 1..60).prop_filter_map("needs an edge", move |pairs| {
                let pairs: Vec<_> = pairs.into_iter().filter(|(u, v)| u != v).collect();
                (!pairs.is_empty()).then(|| Graph::new(n, pairs).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn holdout_partitions_edges(g in arb_graph(), fraction in 0.0f64..0.99, seed in any::<u64>()) {
            let s = split_edges(&g, fraction, seed).unwrap();
            let train: BTreeSet<_> = s.train_graph.edges().iter().copied().collect();
            let held: BTreeSet<_> = s.held_out_edges.iter().copied().collect();
            prop_assert!(train.is_disjoint(&held));
            let union: Vec<_> = train.union(&held).copied().collect();
            prop_assert_eq!(union.as_slice(), g.edges());
            prop_assert_eq!(held.len(), (fraction * g.edge_count() as f64).round() as usize);
            prop_assert_eq!(s.full_graph().unwrap(), g);
        }
    }
}
