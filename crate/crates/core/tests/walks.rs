use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use walk2kg_core::walk::{embed, generate_walks, SkipGramConfig, WalkConfig};
use walk2kg_core::Graph;

fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn unbiased_walk_leaves_star_center_uniformly() {
    let star = Graph::new(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
    let cfg = WalkConfig { walks_per_node: 5_000, walk_length: 41, seed: 17, ..WalkConfig::default() };
    let mut counts = [0u64; 4];
    for walk in generate_walks(&star, &cfg).unwrap() {
        for step in walk.windows(2).filter(|s| s[0] == 0) {
            counts[step[1]] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    assert!(total >= 100_000);
    for &c in &counts[1..] {
        assert!((c as f64 / total as f64 - 1.0 / 3.0).abs() < 0.02);
    }
    assert!(chi_square_p(&counts[1..], &[total as f64 / 3.0; 3]) > 0.01);
}

#[test]
fn second_order_bias_matches_return_and_inout_weights() {
    // 0 - 1, 1 - 2, 1 - 3, 0 - 2: from 1 having arrived from 0, node 0 is the
    // return step (1/p), node 2 is a common neighbor of 0 (weight 1) and node 3
    // is farther away (1/q).
    let g = Graph::new(4, [(0, 1), (1, 2), (1, 3), (0, 2)]).unwrap();
    let (p, q) = (2.0, 0.5);
    let cfg = WalkConfig { walks_per_node: 40_000, walk_length: 3, return_param_p: p, inout_param_q: q, seed: 5 };
    let mut counts = [0u64; 3];
    for walk in generate_walks(&g, &cfg).unwrap() {
        if walk.len() == 3 && walk[0] == 0 && walk[1] == 1 {
            counts[[0, 2, 3].iter().position(|&x| x == walk[2]).unwrap()] += 1;
        }
    }
    let weights = [1.0 / p, 1.0, 1.0 / q];
    let total: u64 = counts.iter().sum();
    let z: f64 = weights.iter().sum();
    let expected: Vec<f64> = weights.iter().map(|w| total as f64 * w / z).collect();
    assert!(chi_square_p(&counts, &expected) > 0.01, "{counts:?} vs {expected:?}");
}

#[test]
fn source_rows_stay_bounded_on_larger_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 400;
    let edges: Vec<(usize, usize)> = (0..n * 3).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).filter(|(u, v)| u != v).collect();
    let g = Graph::new(n, edges).unwrap();
    let wcfg = WalkConfig { walks_per_node: 2, walk_length: 20, ..WalkConfig::default() };
    let scfg = SkipGramConfig { epochs: 1, ..SkipGramConfig::default() };
    let e = embed::<f64>(&g, &wcfg, &scfg).unwrap();
    assert_eq!((e.node_count(), e.dim()), (n, 32));
    for row in e.values().iter_rows() {
        assert!(row.iter().all(|x| x.is_finite()));
        assert!(row.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e3);
    }
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..15).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..40)
            .prop_map(move |pairs| Graph::new(n, pairs.into_iter().filter(|(u, v)| u != v)).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn walks_follow_edges_and_have_expected_count(
        g in arb_graph(),
        walks_per_node in 1usize..4,
        walk_length in 1usize..12,
        p in 0.25f64..4.0,
        q in 0.25f64..4.0,
        seed in any::<u64>(),
    ) {
        let cfg = WalkConfig { walks_per_node, walk_length, return_param_p: p, inout_param_q: q, seed };
        let walks = generate_walks(&g, &cfg).unwrap();
        prop_assert_eq!(walks.len(), walks_per_node * g.node_count());
        for w in &walks {
            prop_assert!(!w.is_empty() && w.len() <= walk_length);
            prop_assert!(w.windows(2).all(|s| g.has_edge(s[0], s[1])));
            if w.len() < walk_length {
                prop_assert_eq!(g.degree(*w.last().unwrap()), 0);
            }
        }
    }
}
