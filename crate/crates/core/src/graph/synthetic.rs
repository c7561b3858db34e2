//! Planted-partition graphs standing in for SNAP communities when no data
//! files are available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphDataset};
use crate::error::{invalid, Result};
use crate::seed::SeedSplitter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPartitionConfig {
    pub graphs: usize,
    /// Target number of nodes per planted block.
    pub block_size: usize,
    pub intra_prob: f64,
    pub inter_prob: f64,
    /// Graphs with fewer edges are redrawn.
    pub min_edges: usize,
}

impl Default for PlantedPartitionConfig {
    fn default() -> Self {
        Self {
            graphs: 200,
            block_size: 12,
            intra_prob: 0.3,
            inter_prob: 0.02,
            min_edges: 5,
        }
    }
}

/// One planted-partition graph on `n` nodes split into contiguous blocks.
pub fn planted_partition<R: Rng>(
    n: usize,
    blocks: usize,
    intra_prob: f64,
    inter_prob: f64,
    rng: &mut R,
) -> Result<Graph> {
    if blocks == 0 || blocks > n.max(1) {
        return Err(invalid(format!("cannot place {n} nodes into {blocks} blocks")));
    }
    if !(0.0..=1.0).contains(&intra_prob) || !(0.0..=1.0).contains(&inter_prob) {
        return Err(invalid("edge probabilities must lie in [0, 1]"));
    }
    let block_of = |v: usize| v * blocks / n;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block_of(u) == block_of(v) { intra_prob } else { inter_prob };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges)
}

/// `cfg.graphs` graphs with node counts uniform in `size_range`.
pub fn generate_dataset(
    cfg: &PlantedPartitionConfig,
    size_range: (usize, usize),
    seed: u64,
) -> Result<GraphDataset> {
    let (lo, hi) = size_range;
    if lo < 2 || lo > hi {
        return Err(invalid(format!("invalid size range [{lo}, {hi}]")));
    }
    if cfg.min_edges > lo * (lo - 1) / 2 {
        return Err(invalid("min_edges exceeds the edge count of a complete graph"));
    }
    let seeds = SeedSplitter::new(seed);
    let mut dataset = GraphDataset::new(size_range);
    for i in 0..cfg.graphs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.derive("planted-partition", i as u64));
        let n = rng.gen_range(lo..=hi);
        let blocks = ((n as f64 / cfg.block_size.max(1) as f64).round() as usize).clamp(1, n);
        let g = loop {
            let g = planted_partition(n, blocks, cfg.intra_prob, cfg.inter_prob, &mut rng)?;
            if g.edge_count() >= cfg.min_edges {
                break g;
            }
        };
        dataset.graphs.push(g.with_community(Some(i as u64)));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_contract() {
        let cfg = PlantedPartitionConfig::default();
        let d = generate_dataset(&cfg, (16, 21), 11).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.graphs.iter().all(|g| (16..=21).contains(&g.node_count())));
        assert!(d.graphs.iter().all(|g| g.edge_count() >= cfg.min_edges));
        assert_eq!(d, generate_dataset(&cfg, (16, 21), 11).unwrap());

        let mean_density: f64 = d.graphs.iter().map(Graph::density).sum::<f64>() / d.len() as f64;
        assert!((0.1..0.3).contains(&mean_density), "density {mean_density}");
    }

    #[test]
    fn blocks_are_denser_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = planted_partition(200, 2, 0.3, 0.02, &mut rng).unwrap();
        let inside = g.edges().iter().filter(|&&(u, v)| (u < 100) == (v < 100)).count();
        assert!(inside as f64 > 0.8 * g.edge_count() as f64);
    }
}
