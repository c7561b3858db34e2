//! Source embeddings from truncated random walks (DeepWalk / node2vec).

mod skipgram;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use skipgram::{train_skipgram, SkipGramConfig};

use crate::embedding::EmbeddingMatrix;
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    /// Maximum number of nodes in a walk, start node included.
    pub walk_length: usize,
    pub return_param_p: f64,
    pub inout_param_q: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 10,
            walk_length: 40,
            return_param_p: 1.0,
            inout_param_q: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    /// Uniform first-order walks: node2vec with `p = q = 1`.
    pub fn deepwalk() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node == 0 || self.walk_length == 0 {
            return Err(invalid("walks_per_node and walk_length must be at least 1"));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.return_param_p) || !positive(self.inout_param_q) {
            return Err(invalid("node2vec p and q must be positive"));
        }
        Ok(())
    }

    fn is_uniform(&self) -> bool {
        self.return_param_p == 1.0 && self.inout_param_q == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMethod {
    DeepWalk,
    Node2Vec,
}

impl SourceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceMethod::DeepWalk => "deepwalk",
            SourceMethod::Node2Vec => "node2vec",
        }
    }

    /// DeepWalk ignores the configured `p` and `q`.
    pub fn walk_config(self, base: WalkConfig) -> WalkConfig {
        match self {
            SourceMethod::DeepWalk => WalkConfig {
                return_param_p: 1.0,
                inout_param_q: 1.0,
                ..base
            },
            SourceMethod::Node2Vec => base,
        }
    }
}

impl std::str::FromStr for SourceMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deepwalk" => Ok(SourceMethod::DeepWalk),
            "node2vec" => Ok(SourceMethod::Node2Vec),
            other => Err(invalid(format!("unknown source method {other:?}"))),
        }
    }
}

/// `walks_per_node × n` walks, ordered by round then start node.
///
/// Walk `k` draws from its own ChaCha stream `k`, so walks are independent of
/// generation order.
pub fn generate_walks(g: &Graph, cfg: &WalkConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let n = g.node_count();
    if n == 0 {
        return Err(invalid("cannot walk an empty graph"));
    }
    let mut walks = Vec::with_capacity(n * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        for start in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((round * n + start) as u64);
            walks.push(walk_from(g, start, cfg, &mut rng));
        }
    }
    Ok(walks)
}

fn walk_from<R: Rng>(g: &Graph, start: usize, cfg: &WalkConfig, rng: &mut R) -> Vec<usize> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    let mut weights = Vec::new();
    while walk.len() < cfg.walk_length {
        let cur = *walk.last().unwrap();
        let nbrs = g.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        let prev = (walk.len() >= 2).then(|| walk[walk.len() - 2]);
        let next = match prev {
            Some(prev) if !cfg.is_uniform() => {
                weights.clear();
                weights.extend(nbrs.iter().map(|&x| {
                    if x == prev {
                        1.0 / cfg.return_param_p
                    } else if g.has_edge(x, prev) {
                        1.0
                    } else {
                        1.0 / cfg.inout_param_q
                    }
                }));
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = nbrs.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                nbrs[pick]
            }
            _ => nbrs[rng.gen_range(0..nbrs.len())],
        };
        walk.push(next);
    }
    walk
}

/// Source embedding of a graph: random walks followed by skip-gram training.
pub fn embed<T: Scalar>(g: &Graph, wcfg: &WalkConfig, scfg: &SkipGramConfig) -> Result<EmbeddingMatrix<T>> {
    let walks = generate_walks(g, wcfg)?;
    train_skipgram(&walks, g.node_count(), scfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn walk_count_and_adjacency() {
        let cfg = WalkConfig {
            walks_per_node: 2,
            walk_length: 5,
            ..WalkConfig::default()
        };
        let g = path3();
        let walks = generate_walks(&g, &cfg).unwrap();
        assert_eq!(walks.len(), 6);
        for (k, w) in walks.iter().enumerate() {
            assert_eq!(w[0], k % 3);
            assert!(w.len() <= 5);
            assert!(w.windows(2).all(|p| g.has_edge(p[0], p[1])));
        }
    }

    #[test]
    fn isolated_node_walks_stop_immediately() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let walks = generate_walks(&g, &WalkConfig::default()).unwrap();
        assert!(walks.iter().filter(|w| w[0] == 2).all(|w| w == &[2]));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let g = Graph::new(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]).unwrap();
        let cfg = WalkConfig {
            return_param_p: 0.5,
            inout_param_q: 2.0,
            seed: 9,
            ..WalkConfig::default()
        };
        assert_eq!(generate_walks(&g, &cfg).unwrap(), generate_walks(&g, &cfg).unwrap());
        let other = WalkConfig { seed: 10, ..cfg };
        assert_ne!(generate_walks(&g, &cfg).unwrap(), generate_walks(&g, &other).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let g = path3();
        for cfg in [
            WalkConfig { walks_per_node: 0, ..WalkConfig::default() },
            WalkConfig { walk_length: 0, ..WalkConfig::default() },
            WalkConfig { return_param_p: 0.0, ..WalkConfig::default() },
            WalkConfig { inout_param_q: -1.0, ..WalkConfig::default() },
        ] {
            assert!(generate_walks(&g, &cfg).is_err());
        }
    }

    #[test]
    fn deepwalk_preset_is_unit_p_q() {
        let base = WalkConfig { return_param_p: 4.0, inout_param_q: 0.25, ..WalkConfig::default() };
        let dw = SourceMethod::DeepWalk.walk_config(base);
        assert_eq!((dw.return_param_p, dw.inout_param_q), (1.0, 1.0));
        assert_eq!(SourceMethod::Node2Vec.walk_config(base), base);
        assert_eq!("node2vec".parse::<SourceMethod>().unwrap(), SourceMethod::Node2Vec);
    }
}
