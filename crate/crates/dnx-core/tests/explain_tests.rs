//! Explainer checks against dense, finite-difference and exhaustive
//! grid-search oracles.

mod common;

use common::{
    finite_difference_grad, random_features,
    random_graph, random_matrix, relative_gap, simplex_grid,
};
use dnx_core::distill::SgcSurrogate;
use dnx_core::explain::{
    adjacency_baseline_explain, build_quadratic_form, dnx_explain, dnx_objective,
    dnx_objective_with_grad, fastdnx_explain, verify_convexity, DnxConfig, DnxInit,
};
use dnx_core::graph::{build_normalized_adjacency, power, FeatureMatrix, Graph};
use dnx_core::rng::substream;
use ndarray::{Array1, Array2};
use rand::Rng;
use std::sync::Arc;

fn random_surrogate(n: usize, d: usize, c: usize, depth: usize, seed: u64) -> SgcSurrogate {
    let g = random_graph(n, 0.2, seed);
    let x = random_features(n, d, seed + 1);
    let adj = Arc::new(power(&build_normalized_adjacency(&g), depth).unwrap());
    let mut rng = substream(seed + 2, "surrogate-bias");
    let bias = Array1::from_shape_fn(c, |_| rng.gen_range(-0.5..0.5));
    SgcSurrogate::new(random_matrix(d, c, seed + 3), bias, depth, adj, Arc::new(x)).unwrap()
}

/// Dense oracle for the masking objective, with junk scores planted on
/// non-candidate nodes to confirm they cannot influence the value.
fn dense_objective(s: &SgcSurrogate, u: usize, scores: &[f64], junk: f64) -> f64 {
    let n = s.n();
    let g_dense = {
        // Rebuild the dense power from the operator itself.
        let base = s.adj_pow();
        assert!(base.power() >= 1);
        base.rows().to_dense()
    };
    let mut full_scores = vec![junk; n];
    for (slot, &node) in s.adj_pow().support(u).iter().enumerate() {
        full_scores[node] = scores[slot];
    }
    let x_theta = s.features().as_array().dot(s.theta());
    let mut acc = Array1::<f64>::zeros(s.theta().ncols());
    for j in 0..n {
        let a = g_dense[[u, j]];
        acc.scaled_add(a * (full_scores[j] - 1.0), &x_theta.row(j));
    }
    acc.dot(&acc)
}

#[test]
fn objective_matches_dense_oracle_and_ignores_outsiders() {
    for seed in 0..4u64 {
        let s = random_surrogate(16, 4, 3, 2, 900 + seed);
        let mut rng = substream(seed, "objective-scores");
        for u in [0usize, 5, 11] {
            let k = s.adj_pow().support(u).len();
            let scores: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let direct = dnx_objective(&s, u, &scores);
            for junk in [0.0, 0.37, -2.0] {
                let oracle = dense_objective(&s, u, &scores, junk);
                assert!(
                    (direct - oracle).abs() <= 1e-10,
                    "seed {seed} node {u} junk {junk}: {direct} vs {oracle}"
                );
            }
        }
    }
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let s = random_surrogate(10, 3, 3, 2, 950);
    let u = 4;
    let k = s.adj_pow().support(u).len();
    let mut rng = substream(7, "gradcheck-scores");
    let scores: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.9)).collect();
    let (_, analytic) = dnx_objective_with_grad(&s, u, &scores);
    let f = |e: &[f64]| dnx_objective(&s, u, e);
    let numeric = finite_difference_grad(&f, &scores, 1e-6);
    let gap = relative_gap(&analytic, &numeric);
    assert!(gap <= 1e-6, "relative gradient gap {gap}");
}

/// Small graph whose target has three candidates, one with scaled-up
/// features. The solver must match an exhaustive simplex grid search.
#[test]
fn planted_dominant_candidate_matches_grid_search() {
    let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
    let adj = Arc::new(build_normalized_adjacency(&g));
    let x = FeatureMatrix::new(ndarray::array![[0.2, -0.1], [0.3, 0.4], [6.0, -5.0]]).unwrap();
    let theta = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
    let s = SgcSurrogate::new(theta, Array1::zeros(2), 1, adj, Arc::new(x)).unwrap();
    let u = 1; // candidates {0, 1, 2}

    let e = dnx_explain(&s, u, &DnxConfig::default());
    assert_eq!(e.candidates, vec![0, 1, 2]);
    assert_eq!(e.top_k(1), vec![2], "dominant candidate must rank first");

    // Exhaustive search at resolution 0.01 over the 2-simplex.
    let mut best_value = f64::INFINITY;
    let mut best_point = Vec::new();
    for point in simplex_grid(3, 100) {
        let value = dnx_objective(&s, u, &point);
        if value < best_value {
            best_value = value;
            best_point = point;
        }
    }
    let solver_value = e.objective.unwrap();
    assert!(
        solver_value <= best_value + 1e-6,
        "solver {solver_value} vs grid {best_value} at {best_point:?}"
    );
}

#[test]
fn dnx_reaches_same_objective_from_random_inits() {
    for seed in 0..3u64 {
        let s = random_surrogate(14, 4, 3, 2, 980 + seed);
        for u in [1usize, 7] {
            let mut finals = Vec::new();
            for init_seed in 0..5u64 {
                let config = DnxConfig {
                    init: DnxInit::Random { seed: 1000 + init_seed },
                    ..DnxConfig::default()
                };
                finals.push(dnx_explain(&s, u, &config).objective.unwrap());
            }
            let lo = finals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo <= 1e-6, "seed {seed} node {u}: spread {}", hi - lo);
        }
    }
}

/// Adding nodes and edges strictly outside the L-hop neighborhood must not
/// change the scores of either solver.
#[test]
fn scores_are_local_to_the_neighborhood() {
    let depth = 2;
    // Path 0-1-2-3-4: the 2-hop ball of node 0 is {0, 1, 2}.
    let g_small = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    // Same graph plus a far-away clique hanging off node 4.
    let g_big = Graph::new(
        8,
        [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (5, 7), (6, 7)],
    )
    .unwrap();

    let d = 3;
    let mut rng = substream(5, "locality-features");
    let x_small = Array2::from_shape_fn((5, d), |_| rng.gen_range(-1.0..1.0));
    let mut x_big = Array2::<f64>::zeros((8, d));
    for i in 0..5 {
        x_big.row_mut(i).assign(&x_small.row(i));
    }
    for i in 5..8 {
        for j in 0..d {
            x_big[[i, j]] = rng.gen_range(-1.0..1.0);
        }
    }
    let theta = random_matrix(d, 2, 777);
    let bias = Array1::from_vec(vec![0.2, -0.3]);

    let make = |g: &Graph, x: Array2<f64>| {
        SgcSurrogate::new(
            theta.clone(),
            bias.clone(),
            depth,
            Arc::new(power(&build_normalized_adjacency(g), depth).unwrap()),
            Arc::new(FeatureMatrix::new(x).unwrap()),
        )
        .unwrap()
    };
    let s_small = make(&g_small, x_small);
    let s_big = make(&g_big, x_big);

    let u = 0;
    let fast_small = fastdnx_explain(&s_small, u);
    let fast_big = fastdnx_explain(&s_big, u);
    assert_eq!(fast_small.candidates, fast_big.candidates);
    for (a, b) in fast_small.scores.iter().zip(&fast_big.scores) {
        assert!((a - b).abs() <= 1e-12);
    }

    let dnx_small = dnx_explain(&s_small, u, &DnxConfig::default());
    let dnx_big = dnx_explain(&s_big, u, &DnxConfig::default());
    assert_eq!(dnx_small.candidates, dnx_big.candidates);
    for (a, b) in dnx_small.scores.iter().zip(&dnx_big.scores) {
        assert!((a - b).abs() <= 1e-12);
    }
}

/// On a symmetric triangle with the target's own features scaled up, all
/// three explainers put the target first (the baseline by the id tie rule).
#[test]
fn ranking_sanity_planted_dominant_self() {
    let g = Graph::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
    let adj = Arc::new(build_normalized_adjacency(&g));
    let x = FeatureMatrix::new(ndarray::array![[100.0, -90.0], [0.4, 0.2], [0.1, 0.5]]).unwrap();
    let theta = ndarray::array![[1.0, -0.5], [-0.5, 1.0]];
    let s = SgcSurrogate::new(theta, Array1::zeros(2), 1, adj.clone(), Arc::new(x)).unwrap();

    let u = 0;
    assert_eq!(fastdnx_explain(&s, u).top_k(1), vec![0]);
    assert_eq!(dnx_explain(&s, u, &DnxConfig::default()).top_k(1), vec![0]);
    assert_eq!(adjacency_baseline_explain(&adj, u).top_k(1), vec![0]);
}

#[test]
fn fastdnx_is_bit_deterministic() {
    let s = random_surrogate(20, 5, 4, 3, 1020);
    let a = fastdnx_explain(&s, 3);
    let b = fastdnx_explain(&s, 3);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.scores), bits(&b.scores));
    assert_eq!(a.candidates, b.candidates);
}

#[test]
fn quadratic_forms_are_psd_on_random_instances() {
    for seed in 0..10u64 {
        let s = random_surrogate(18, 4, 3, 3, 1100 + seed);
        let u = (seed as usize * 5) % 18;
        let q = build_quadratic_form(&s, u);
        let report = verify_convexity(&s, u, &q, 16, seed);
        assert!(report.ok, "seed {seed} node {u}: {report:?}");
        assert!(report.symmetry_gap <= 1e-10);
        assert!(report.min_eigenvalue >= -1e-8);
    }
}
