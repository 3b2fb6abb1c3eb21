//! Evaluation protocols (accuracy, average precision, edge AUC, fidelity)
//! and empirical verification of the faithfulness bounds.
//!
//! Unfaithfulness of an explanation is the mean L2 gap between a model's
//! prediction for the target node and the same prediction after the
//! explanation mask is applied, averaged over the clean input and a set of
//! Gaussian feature perturbations of the target's neighborhood. The bound
//! checks compare this against closed-form constants derived from spectral
//! norms of the surrogate weights and the (perturbed) features.

use crate::dataset::Dataset;
use crate::distill::SgcSurrogate;
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::graph::FeatureMatrix;
use crate::model::{argmax, BlackBoxModel};
use crate::numeric::{chi_square_cdf, spectral_norm};
use crate::rng::{node_stream, standard_normal};
use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Fraction of the ground-truth set recovered among the top-k candidates.
/// `k` defaults to the truth size and is clamped to the candidate count.
pub fn explanation_accuracy(
    e: &Explanation,
    truth: &BTreeSet<usize>,
    k: Option<usize>,
) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidData("empty ground-truth set".into()));
    }
    let k = k.unwrap_or(truth.len());
    let top = e.top_k(k);
    let hits = top.iter().filter(|u| truth.contains(u)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction of the top-k candidates that are correct.
pub fn average_precision_topk(e: &Explanation, truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidData("empty ground-truth set".into()));
    }
    if k == 0 {
        return Err(Error::InvalidData("k must be >= 1".into()));
    }
    let top = e.top_k(k);
    let hits = top.iter().filter(|u| truth.contains(u)).count();
    Ok(hits as f64 / k as f64)
}

/// Probability that a random true item outranks a random false one, ties
/// counting one half (rank-sum form). `None` when either side is empty.
pub fn edge_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), truth.len(), "score/truth length mismatch");
    let n_true = truth.iter().filter(|&&t| t).count();
    let n_false = truth.len() - n_true;
    if n_true == 0 || n_false == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks across tied score groups, 1-based.
    let mut rank_sum_true = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = ((i + 1 + j) as f64) / 2.0;
        for &idx in &order[i..j] {
            if truth[idx] {
                rank_sum_true += avg_rank;
            }
        }
        i = j;
    }
    let nt = n_true as f64;
    Some((rank_sum_true - nt * (nt + 1.0) / 2.0) / (nt * n_false as f64))
}

/// Accuracy drop when each evaluated node is classified from only the
/// highest-scored part of its explanation: features of the dropped
/// candidates are zeroed, the graph stays fixed. `sparsity` is the removed
/// fraction.
pub fn fidelity_minus(
    model: &dyn BlackBoxModel,
    dataset: &Dataset,
    explanations: &[Explanation],
    sparsity: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidData(format!("sparsity {sparsity} outside [0, 1]")));
    }
    if explanations.is_empty() {
        return Err(Error::InvalidData("no explanations to evaluate".into()));
    }
    let full = model.predict(&dataset.features);
    let full_labels = full.argmax_labels();
    let hits_full = explanations
        .iter()
        .filter(|e| full_labels[e.node] == dataset.labels[e.node])
        .count();

    let hits_masked: usize = explanations
        .par_iter()
        .map(|e| {
            let k = e.candidates.len();
            let keep_count = (((1.0 - sparsity) * k as f64).ceil() as usize).min(k);
            let kept: BTreeSet<usize> = e.top_k(keep_count).into_iter().collect();
            let mut x = dataset.features.as_array().clone();
            for &j in &e.candidates {
                if !kept.contains(&j) {
                    x.row_mut(j).fill(0.0);
                }
            }
            let masked = FeatureMatrix::new_unchecked(x);
            let probs = model.predict_node(e.node, &masked);
            usize::from(argmax(probs.as_slice().expect("contiguous")) == dataset.labels[e.node])
        })
        .sum();

    let n = explanations.len() as f64;
    Ok(hits_full as f64 / n - hits_masked as f64 / n)
}

/// Gaussian feature-perturbation settings for the faithfulness checks.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationConfig {
    /// Number of perturbed copies; the clean input is always included.
    pub num_perturbations: usize,
    pub sigma2: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            num_perturbations: 10,
            sigma2: 0.01,
            seed: 0,
        }
    }
}

/// Apply the explanation as a feature mask: candidate rows scaled by their
/// scores, all other rows untouched.
pub fn masked_features(x: &FeatureMatrix, e: &Explanation) -> FeatureMatrix {
    let mut data = x.as_array().clone();
    for (&j, &score) in e.candidates.iter().zip(&e.scores) {
        data.row_mut(j).mapv_inplace(|v| v * score);
    }
    FeatureMatrix::new_unchecked(data)
}

fn draws_with_rng(
    x: &FeatureMatrix,
    rows: &[usize],
    count: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<FeatureMatrix> {
    (0..count)
        .map(|_| {
            let mut data = x.as_array().clone();
            for &i in rows {
                for v in data.row_mut(i) {
                    *v += sigma * standard_normal(rng);
                }
            }
            FeatureMatrix::new_unchecked(data)
        })
        .collect()
}

/// The clean input followed by the seeded perturbations of the candidate
/// neighborhood. Streams are per target node.
pub fn perturbation_inputs(
    x: &FeatureMatrix,
    e: &Explanation,
    pc: &PerturbationConfig,
) -> Vec<FeatureMatrix> {
    let mut rng = node_stream(pc.seed, "perturb", e.node);
    let mut inputs = Vec::with_capacity(pc.num_perturbations + 1);
    inputs.push(x.clone());
    inputs.extend(draws_with_rng(
        x,
        &e.candidates,
        pc.num_perturbations,
        pc.sigma2.sqrt(),
        &mut rng,
    ));
    inputs
}

fn l2_gap(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn unfaithfulness_over(
    model: &dyn BlackBoxModel,
    u: usize,
    e: &Explanation,
    inputs: &[FeatureMatrix],
) -> f64 {
    let total: f64 = inputs
        .iter()
        .map(|x| {
            let plain = model.predict_node(u, x);
            let masked = model.predict_node(u, &masked_features(x, e));
            l2_gap(&plain, &masked)
        })
        .sum();
    total / inputs.len() as f64
}

/// Mean L2 prediction gap between the (possibly perturbed) input and the
/// explanation-masked input, averaged over the clean features and
/// `pc.num_perturbations` Gaussian draws on the candidate neighborhood.
pub fn unfaithfulness(
    model: &dyn BlackBoxModel,
    features: &FeatureMatrix,
    u: usize,
    e: &Explanation,
    pc: &PerturbationConfig,
) -> f64 {
    let inputs = perturbation_inputs(features, e, pc);
    unfaithfulness_over(model, u, e, &inputs)
}

/// Deterministic bound check for one node.
#[derive(Debug, Clone)]
pub struct NodeBoundReport {
    pub node: usize,
    /// Mean unfaithfulness of the surrogate.
    pub lhs_psi: f64,
    /// Mean unfaithfulness of the black box.
    pub lhs_phi: f64,
    /// L2 norm of the masked-out part of the operator row.
    pub delta_norm: f64,
    /// Spectral-norm constant, sharing the perturbation draws with the LHS.
    pub gamma: f64,
    pub rhs_psi: f64,
    pub rhs_phi: f64,
    /// Distillation error bound passed by the caller.
    pub alpha_input: f64,
    /// Max per-node model gap measured on exactly the evaluated inputs.
    pub alpha_measured: f64,
    /// The larger of the two, used in the black-box bound.
    pub alpha_used: f64,
    pub psi_ok: bool,
    pub phi_ok: bool,
}

/// Floating-point slack for the bound assertions.
pub const BOUND_SLACK: f64 = 1e-9;

/// Verify the surrogate bound and the distillation-shifted black-box bound
/// at node `u`, reusing one set of perturbation draws for the left side,
/// the spectral constant and the measured distillation gap.
pub fn verify_bounds(
    s: &SgcSurrogate,
    phi: &dyn BlackBoxModel,
    u: usize,
    e: &Explanation,
    pc: &PerturbationConfig,
    alpha: f64,
) -> NodeBoundReport {
    let inputs = perturbation_inputs(s.features(), e, pc);
    let theta_norm = spectral_norm(s.theta().view());

    let mut lhs_psi = 0.0;
    let mut lhs_phi = 0.0;
    let mut alpha_measured = 0.0f64;
    let mut max_feature_norm = 0.0f64;
    for x in &inputs {
        let masked = masked_features(x, e);
        let psi_plain = s.predict_node(u, x);
        let psi_masked = s.predict_node(u, &masked);
        let phi_plain = phi.predict_node(u, x);
        let phi_masked = phi.predict_node(u, &masked);
        lhs_psi += l2_gap(&psi_plain, &psi_masked);
        lhs_phi += l2_gap(&phi_plain, &phi_masked);
        alpha_measured = alpha_measured
            .max(l2_gap(&phi_plain, &psi_plain))
            .max(l2_gap(&phi_masked, &psi_masked));
        max_feature_norm = max_feature_norm.max(spectral_norm(x.view()));
    }
    lhs_psi /= inputs.len() as f64;
    lhs_phi /= inputs.len() as f64;

    let delta_norm = masked_row_delta_norm(s, u, e);
    let gamma = theta_norm * max_feature_norm;
    let rhs_psi = gamma * delta_norm;
    let alpha_used = alpha.max(alpha_measured);
    let rhs_phi = rhs_psi + 2.0 * alpha_used;

    NodeBoundReport {
        node: u,
        lhs_psi,
        lhs_phi,
        delta_norm,
        gamma,
        rhs_psi,
        rhs_phi,
        alpha_input: alpha,
        alpha_measured,
        alpha_used,
        psi_ok: lhs_psi <= rhs_psi + BOUND_SLACK,
        phi_ok: lhs_phi <= rhs_phi + BOUND_SLACK,
    }
}

/// `|| A^L_u - A^L_u diag(E) ||_2` over the candidates.
pub fn masked_row_delta_norm(s: &SgcSurrogate, u: usize, e: &Explanation) -> f64 {
    let (support, weights) = s.adj_pow().row(u);
    let mut total = 0.0f64;
    for (&j, &a) in support.iter().zip(weights) {
        let delta = a * (1.0 - e.score_of(j));
        total += delta * delta;
    }
    total.sqrt()
}

/// Monte-Carlo check of the probabilistic unfaithfulness bound.
#[derive(Debug, Clone)]
pub struct ProbBoundReport {
    pub node: usize,
    pub xi: f64,
    pub degrees_of_freedom: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta_norm: f64,
    pub sigma: f64,
    /// `xi - gamma1 |delta|` (minus `2 alpha` for the black-box variant);
    /// the bound is vacuous when this is negative.
    pub numerator: f64,
    pub vacuous: bool,
    pub chi2_bound: f64,
    pub trials: usize,
    pub empirical: f64,
    pub std_err: f64,
    pub ok: bool,
}

/// Estimate `P(mean unfaithfulness <= xi)` over independent perturbation
/// sets and compare against the chi-square lower bound. Pass `phi_alpha` to
/// check the black-box variant instead of the surrogate one.
pub fn verify_probabilistic_bound(
    s: &SgcSurrogate,
    u: usize,
    e: &Explanation,
    pc: &PerturbationConfig,
    xi: f64,
    trials: usize,
    phi_alpha: Option<(&dyn BlackBoxModel, f64)>,
) -> ProbBoundReport {
    let features = s.features();
    let theta_norm = spectral_norm(s.theta().view());
    let x_norm = spectral_norm(features.view());
    let delta_norm = masked_row_delta_norm(s, u, e);
    let k = pc.num_perturbations;
    let gamma1 = theta_norm * x_norm;
    let gamma2 = theta_norm / (k as f64 + 1.0);
    let (n, d) = (features.n(), features.dim());
    let degrees_of_freedom = (k * n * d) as f64;
    let sigma = pc.sigma2.sqrt();

    let numerator = match phi_alpha {
        Some((_, alpha)) => xi - gamma1 * delta_norm - 2.0 * alpha,
        None => xi - gamma1 * delta_norm,
    };
    let vacuous = numerator < 0.0;
    let denom = gamma2 * delta_norm * sigma;
    let chi2_bound = if vacuous {
        0.0
    } else if denom == 0.0 {
        1.0
    } else {
        chi_square_cdf(degrees_of_freedom, numerator / denom - k as f64)
    };

    let successes: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = pc
                .seed
                .wrapping_add((trial as u64 + 1).wrapping_mul(0xd1b5_4a32_d192_ed03));
            let mut rng = node_stream(trial_seed, "prob-bound", u);
            let mut inputs = Vec::with_capacity(k + 1);
            inputs.push(features.clone());
            inputs.extend(draws_with_rng(features, &e.candidates, k, sigma, &mut rng));
            let value = match phi_alpha {
                Some((phi, _)) => unfaithfulness_over(phi, u, e, &inputs),
                None => unfaithfulness_over(s, u, e, &inputs),
            };
            usize::from(value <= xi)
        })
        .sum();
    let empirical = successes as f64 / trials.max(1) as f64;
    let std_err = (chi2_bound * (1.0 - chi2_bound) / trials.max(1) as f64).sqrt();
    let ok = vacuous || empirical >= chi2_bound - 3.0 * std_err;

    ProbBoundReport {
        node: u,
        xi,
        degrees_of_freedom,
        gamma1,
        gamma2,
        delta_norm,
        sigma,
        numerator,
        vacuous,
        chi2_bound,
        trials,
        empirical,
        std_err,
        ok,
    }
}

/// Degree histograms split by motif membership, with the best
/// single-threshold classification accuracy.
#[derive(Debug, Clone)]
pub struct DegreeSeparationReport {
    pub motif_hist: BTreeMap<usize, usize>,
    pub base_hist: BTreeMap<usize, usize>,
    pub threshold: usize,
    /// True when the best rule classifies low degrees as motif.
    pub motif_below: bool,
    pub accuracy: f64,
    pub majority_prior: f64,
}

pub fn degree_separation_report(dataset: &Dataset) -> DegreeSeparationReport {
    let n = dataset.graph.n();
    let mut motif_hist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut base_hist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut motif_total = 0usize;
    for u in 0..n {
        let deg = dataset.graph.degree(u);
        if dataset.is_motif_node(u) {
            motif_total += 1;
            *motif_hist.entry(deg).or_default() += 1;
        } else {
            *base_hist.entry(deg).or_default() += 1;
        }
    }
    let base_total = n - motif_total;
    let max_degree = dataset.graph.max_degree();

    let mut best = (0usize, true, 0.0f64);
    for t in 0..=(max_degree + 1) {
        // Rule: motif iff degree < t. The flipped rule scores 1 - acc.
        let motif_below_t: usize = motif_hist.range(..t).map(|(_, c)| c).sum();
        let base_at_or_above: usize = base_hist.range(t..).map(|(_, c)| c).sum();
        let acc = (motif_below_t + base_at_or_above) as f64 / n as f64;
        if acc > best.2 {
            best = (t, true, acc);
        }
        if 1.0 - acc > best.2 {
            best = (t, false, 1.0 - acc);
        }
    }
    DegreeSeparationReport {
        motif_hist,
        base_hist,
        threshold: best.0,
        motif_below: best.1,
        accuracy: best.2,
        majority_prior: motif_total.max(base_total) as f64 / n as f64,
    }
}

/// One value in a delimited-text metrics table.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub dataset: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn push(&mut self, dataset: &str, method: &str, metric: &str, value: f64) {
        self.rows.push(MetricsRow {
            dataset: dataset.to_string(),
            method: method.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn to_tsv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for comment in comments {
            let _ = writeln!(out, "# {comment}");
        }
        out.push_str("dataset\tmethod\tmetric\tvalue\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                row.dataset, row.method, row.metric, row.value
            );
        }
        out
    }
}

/// Mean top-k accuracy over explanations with ground truth; `k` per node is
/// its motif size. `None` when no explanation has ground truth.
pub fn mean_explanation_accuracy(explanations: &[Explanation], dataset: &Dataset) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for e in explanations {
        if let Some(truth) = dataset.ground_truth.get(&e.node) {
            total += explanation_accuracy(e, truth, None).expect("non-empty truth");
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

pub fn mean_average_precision(
    explanations: &[Explanation],
    dataset: &Dataset,
    k: usize,
) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for e in explanations {
        if let Some(truth) = dataset.ground_truth.get(&e.node) {
            total += average_precision_topk(e, truth, k).expect("non-empty truth");
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Mean per-node edge AUC: the candidate-induced edges are scored by summed
/// endpoint scores, an edge is true when both endpoints are in the node's
/// ground-truth set. Nodes with a degenerate edge set are skipped.
pub fn mean_edge_auc(explanations: &[Explanation], dataset: &Dataset) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for e in explanations {
        let Some(truth) = dataset.ground_truth.get(&e.node) else {
            continue;
        };
        let candidates: BTreeSet<usize> = e.candidates.iter().copied().collect();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for &(a, b) in dataset.graph.edges() {
            if candidates.contains(&a) && candidates.contains(&b) {
                scores.push(e.score_of(a) + e.score_of(b));
                labels.push(truth.contains(&a) && truth.contains(&b));
            }
        }
        if let Some(auc) = edge_auc(&scores, &labels) {
            total += auc;
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}
