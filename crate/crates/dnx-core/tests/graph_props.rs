//! Property tests for the graph operator against dense oracles.

mod common;

use common::{bfs_distances, dense_normalized_adjacency, dense_power, max_abs_diff, random_graph};
use dnx_core::graph::{build_normalized_adjacency, l_hop_neighborhood, power};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn row_support_equals_l_hop_neighborhood(seed in 0u64..5000, n in 2usize..50, l in 1usize..4) {
        let g = random_graph(n, 0.08, seed);
        let adj = power(&build_normalized_adjacency(&g), l).unwrap();
        for u in 0..n {
            let support: Vec<usize> = adj.support(u).to_vec();
            let hood = l_hop_neighborhood(&g, u, l);
            prop_assert_eq!(support, hood, "node {} of n={} l={}", u, n, l);
        }
    }

    #[test]
    fn sparse_power_matches_dense(seed in 0u64..5000, n in 2usize..30, l in 1usize..4) {
        let g = random_graph(n, 0.15, seed);
        let sparse = power(&build_normalized_adjacency(&g), l).unwrap();
        let dense = dense_power(&dense_normalized_adjacency(&g), l);
        prop_assert!(max_abs_diff(&sparse.rows().to_dense(), &dense) <= 1e-10);
    }

    #[test]
    fn powers_stay_symmetric(seed in 0u64..5000, n in 2usize..40, l in 1usize..4) {
        let g = random_graph(n, 0.12, seed);
        let adj = power(&build_normalized_adjacency(&g), l).unwrap();
        prop_assert!(adj.rows().max_symmetry_gap() <= 1e-12);
    }

    #[test]
    fn power_values_in_unit_interval(seed in 0u64..5000, n in 2usize..40, l in 1usize..4) {
        let g = random_graph(n, 0.12, seed);
        let adj = power(&build_normalized_adjacency(&g), l).unwrap();
        for u in 0..n {
            let (_, values) = adj.row(u);
            prop_assert!(values.iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn neighborhood_matches_bfs(seed in 0u64..5000, n in 2usize..50, l in 0usize..4) {
        let g = random_graph(n, 0.1, seed);
        for u in 0..n {
            let dist = bfs_distances(&g, u);
            let expected: Vec<usize> = (0..n).filter(|&v| dist[v] <= l).collect();
            prop_assert_eq!(l_hop_neighborhood(&g, u, l), expected);
        }
    }
}
