mod common;
use dnx_core::distill::{distill, surrogate_predict, DistillConfig, SgcSurrogate};
use dnx_core::explain::{fastdnx_explain, dnx_objective};
use dnx_core::graph::{build_normalized_adjacency, power};
use dnx_core::metrics::explanation_accuracy;
use dnx_core::model::{gcn_forward, train_gcn, GcnConfig};
use dnx_core::synth::{generate, DatasetName, GenSpec};
use ndarray::Array1;
use std::collections::BTreeSet;
use std::sync::Arc;

fn softmax_v(l: &[f64]) -> Vec<f64> {
    let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|&z| (z - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Plain gradient descent with unit-norm steps on softmax logits.
fn gd_explain(s: &SgcSurrogate, u: usize, lr: f64, iters: usize) -> (Vec<usize>, Vec<f64>) {
    let (support, weights) = s.adj_pow().row(u);
    let k = support.len();
    let c = s.theta().ncols();
    let mut rows = vec![vec![0.0; c]; k];
    let mut total = vec![0.0; c];
    for (slot, (&j, &a)) in support.iter().zip(weights).enumerate() {
        for ci in 0..c {
            let v = a * s.feature_logits()[[j, ci]];
            rows[slot][ci] = v;
            total[ci] += v;
        }
    }
    let mut logits = vec![0.0; k];
    let mut scores = softmax_v(&logits);
    for _ in 0..iters {
        let mut residual = vec![0.0; c];
        for ci in 0..c {
            residual[ci] = -total[ci];
            for j in 0..k {
                residual[ci] += scores[j] * rows[j][ci];
            }
        }
        let grad_scores: Vec<f64> = (0..k)
            .map(|j| 2.0 * rows[j].iter().zip(&residual).map(|(&a, &b)| a * b).sum::<f64>())
            .collect();
        let inner: f64 = scores.iter().zip(&grad_scores).map(|(&e, &g)| e * g).sum();
        let grad_logits: Vec<f64> = (0..k).map(|j| scores[j] * (grad_scores[j] - inner)).collect();
        let norm: f64 = grad_logits.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-300 { break; }
        for j in 0..k {
            logits[j] -= lr * grad_logits[j] / norm;
        }
        scores = softmax_v(&logits);
    }
    (support.to_vec(), scores)
}

fn top_k(c: &[usize], s: &[f64], k: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(c[a].cmp(&c[b])));
    idx.into_iter().take(k).map(|i| c[i]).collect()
}

#[test]
fn gd_sweep() {
    for name in [DatasetName::BaHouse, DatasetName::BaBottle, DatasetName::BaCommunity, DatasetName::BaGrids] {
        let d = generate(&GenSpec::new(name, 7)).unwrap();
        let (model, _) = train_gcn(&d, &GcnConfig { seed: 7, ..GcnConfig::default() }).unwrap();
        let adj = build_normalized_adjacency(&d.graph);
        let targets = gcn_forward(&model, &adj, &d.features).unwrap();
        let adj3 = Arc::new(power(&adj, 3).unwrap());
        let (s, _) = distill(&targets, adj3, Arc::new(d.features.clone()), &DistillConfig::default()).unwrap();
        let motif_nodes = d.motif_nodes();
        for (lr, iters) in [(0.1, 100usize), (0.1, 300), (0.1, 500), (0.3, 300), (0.3, 500)] {
            let mut total = 0.0;
            for &u in &motif_nodes {
                let truth = &d.ground_truth[&u];
                let (cands, scores) = gd_explain(&s, u, lr, iters);
                let top = top_k(&cands, &scores, truth.len());
                total += top.intersection(truth).count() as f64 / truth.len() as f64;
            }
            eprintln!("{name} lr={lr} iters={iters} -> gd-dnx acc {:.4}", total / motif_nodes.len() as f64);
        }
    }
}
