//! Independent oracles shared by the integration suites. Everything here
//! recomputes quantities with dense linear algebra or exhaustive
//! enumeration, never through the library's own code paths.

#![allow(dead_code)]

use dnx_core::graph::{FeatureMatrix, Graph};
use dnx_core::model::GcnModel;
use dnx_core::rng::substream;
use ndarray::{Array1, Array2};
use rand::Rng;
use std::collections::BTreeSet;

/// Dense `(D + I)^{-1/2} (A + I) (D + I)^{-1/2}`.
pub fn dense_normalized_adjacency(g: &Graph) -> Array2<f64> {
    let n = g.n();
    let mut a = Array2::<f64>::zeros((n, n));
    for &(i, j) in g.edges() {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    for i in 0..n {
        a[[i, i]] = 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((g.degree(i) + 1) as f64).sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

pub fn dense_power(m: &Array2<f64>, l: usize) -> Array2<f64> {
    assert!(l >= 1);
    let mut out = m.clone();
    for _ in 1..l {
        out = out.dot(m);
    }
    out
}

/// BFS distances, usize::MAX for unreachable.
pub fn bfs_distances(g: &Graph, source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.n()];
    dist[source] = 0;
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Erdos-Renyi-ish random graph, deterministic in the seed.
pub fn random_graph(n: usize, edge_prob: f64, seed: u64) -> Graph {
    let mut rng = substream(seed, "test-random-graph");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < edge_prob {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).expect("generated edges are valid")
}

pub fn random_features(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = substream(seed, "test-random-features");
    FeatureMatrix::new(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = substream(seed, "test-random-matrix");
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Central finite differences of a scalar function.
pub fn finite_difference_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// `|a - b|_2 / max(|a|_2, |b|_2, tiny)`.
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|&x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense re-implementation of the GCN forward pass.
pub fn dense_gcn_forward(model: &GcnModel, adj: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    let relu = |m: &Array2<f64>| m.mapv(|v| v.max(0.0));
    let h1 = relu(&(adj.dot(x).dot(&model.weights[0]) + &model.biases[0]));
    let h2 = relu(&(adj.dot(&h1).dot(&model.weights[1]) + &model.biases[1]));
    let h3 = relu(&(adj.dot(&h2).dot(&model.weights[2]) + &model.biases[2]));
    let h4 = relu(&(h3.dot(&model.weights[3]) + &model.biases[3]));
    let logits = h4.dot(&model.weights[4]) + &model.biases[4];
    dense_softmax_rows(&logits)
}

pub fn dense_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn dense_softmax(v: &Array1<f64>) -> Array1<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = v.mapv(|z| (z - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|x| x / sum);
    out
}

/// Top-k by score with id tie-break, reimplemented by full sort.
pub fn brute_top_k(candidates: &[usize], scores: &[f64], k: usize) -> Vec<usize> {
    let mut pairs: Vec<(usize, f64)> = candidates.iter().copied().zip(scores.iter().copied()).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    pairs.into_iter().take(k).map(|(u, _)| u).collect()
}

pub fn brute_accuracy(candidates: &[usize], scores: &[f64], truth: &BTreeSet<usize>, k: usize) -> f64 {
    let top = brute_top_k(candidates, scores, k);
    top.iter().filter(|u| truth.contains(u)).count() as f64 / truth.len() as f64
}

pub fn brute_average_precision(
    candidates: &[usize],
    scores: &[f64],
    truth: &BTreeSet<usize>,
    k: usize,
) -> f64 {
    let top = brute_top_k(candidates, scores, k);
    top.iter().filter(|u| truth.contains(u)).count() as f64 / k as f64
}

/// AUC by enumerating every (true, false) pair, ties worth one half.
pub fn brute_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let mut wins = 0.0f64;
    let mut pairs = 0usize;
    for i in 0..scores.len() {
        if !truth[i] {
            continue;
        }
        for j in 0..scores.len() {
            if truth[j] {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Every point of the k-simplex on a grid with the given resolution.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; k];
    fn recurse(k: usize, remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == k - 1 {
            current[pos] = remaining;
            out.push(current.clone());
            return;
        }
        for v in 0..=remaining {
            current[pos] = v;
            recurse(k, remaining - v, pos + 1, current, out);
        }
    }
    let mut integer_points = Vec::new();
    recurse(k, steps, 0, &mut current, &mut integer_points);
    for point in integer_points {
        out.push(point.into_iter().map(|v| v as f64 / steps as f64).collect());
    }
    out
}
