//! Node-importance explainers over the surrogate's computational
//! neighborhood, plus node/edge score conversion.
//!
//! All three methods score the candidate set of a target node `u`, which is
//! the support of row `u` of the powered operator (the L-hop neighborhood
//! including `u` itself). Nodes outside the candidates have no influence on
//! the surrogate's prediction of `u`, so their score is implicitly zero.

use crate::distill::SgcSurrogate;
use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency};
use crate::numeric::{symmetric_eigenvalues, Adam};
use crate::rng::node_stream;
use crate::textio::{fmt_f64, fmt_f64_slice, fmt_usize_slice};
use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExplainMethod {
    Dnx,
    FastDnx,
    AdjBaseline,
}

impl ExplainMethod {
    pub const ALL: [ExplainMethod; 3] =
        [ExplainMethod::Dnx, ExplainMethod::FastDnx, ExplainMethod::AdjBaseline];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExplainMethod::Dnx => "dnx",
            ExplainMethod::FastDnx => "fastdnx",
            ExplainMethod::AdjBaseline => "adjbaseline",
        }
    }
}

impl fmt::Display for ExplainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dnx" => Ok(ExplainMethod::Dnx),
            "fastdnx" => Ok(ExplainMethod::FastDnx),
            "adjbaseline" => Ok(ExplainMethod::AdjBaseline),
            other => Err(Error::InvalidData(format!(
                "unknown explainer `{other}`; valid methods: dnx, fastdnx, adjbaseline"
            ))),
        }
    }
}

/// Importance scores for the candidates of one target node.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub node: usize,
    pub method: ExplainMethod,
    /// Candidate node ids, ascending. Always contains `node`.
    pub candidates: Vec<usize>,
    /// One score per candidate. Simplex-constrained for `dnx`,
    /// unconstrained reals otherwise; the ranking is the deliverable.
    pub scores: Vec<f64>,
    /// Final objective value, for solver-based methods.
    pub objective: Option<f64>,
    pub iterations: Option<usize>,
    pub millis: f64,
}

impl Explanation {
    /// Top-k candidates by score, ties broken by ascending node id.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .total_cmp(&self.scores[a])
                .then(self.candidates[a].cmp(&self.candidates[b]))
        });
        order
            .into_iter()
            .take(k.min(self.candidates.len()))
            .map(|i| self.candidates[i])
            .collect()
    }

    /// Score of a node, zero outside the candidates.
    pub fn score_of(&self, node: usize) -> f64 {
        match self.candidates.binary_search(&node) {
            Ok(pos) => self.scores[pos],
            Err(_) => 0.0,
        }
    }
}

/// Per-candidate logit contributions for one target node:
/// row `j` holds `a_uj * (X_j Theta)`, and `total` is their sum, which is
/// the target's centered logit vector.
struct ContributionSystem {
    candidates: Vec<usize>,
    rows: Array2<f64>,
    total: Array1<f64>,
}

fn contribution_system(s: &SgcSurrogate, u: usize) -> ContributionSystem {
    let (support, weights) = s.adj_pow().row(u);
    let c = s.theta().ncols();
    let mut rows = Array2::<f64>::zeros((support.len(), c));
    let mut total = Array1::<f64>::zeros(c);
    for (k, (&j, &a)) in support.iter().zip(weights).enumerate() {
        let contrib = s.feature_logits().row(j).mapv(|v| a * v);
        total += &contrib;
        rows.row_mut(k).assign(&contrib);
    }
    ContributionSystem {
        candidates: support.to_vec(),
        rows,
        total,
    }
}

/// Masking objective: the squared L2 distance between the target's logits
/// under score-weighted features and its unmasked logits. `scores` is
/// indexed like the candidate set.
pub fn dnx_objective(s: &SgcSurrogate, u: usize, scores: &[f64]) -> f64 {
    let system = contribution_system(s, u);
    objective_from_system(&system, scores)
}

/// Objective plus its analytic gradient w.r.t. the scores.
pub fn dnx_objective_with_grad(s: &SgcSurrogate, u: usize, scores: &[f64]) -> (f64, Vec<f64>) {
    let system = contribution_system(s, u);
    let residual = residual_from_system(&system, scores);
    let value = residual.dot(&residual);
    let grad = (0..scores.len())
        .map(|j| 2.0 * system.rows.row(j).dot(&residual))
        .collect();
    (value, grad)
}

fn residual_from_system(system: &ContributionSystem, scores: &[f64]) -> Array1<f64> {
    assert_eq!(scores.len(), system.candidates.len(), "score length mismatch");
    let mut residual = -&system.total;
    for (j, &e) in scores.iter().enumerate() {
        residual.scaled_add(e, &system.rows.row(j));
    }
    residual
}

fn objective_from_system(system: &ContributionSystem, scores: &[f64]) -> f64 {
    let r = residual_from_system(system, scores);
    r.dot(&r)
}

#[derive(Debug, Clone, Copy)]
pub enum DnxInit {
    /// Zero logits, which is the uniform simplex point.
    Uniform,
    /// Standard normal logits from the node's substream of this seed.
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct DnxConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Early stop when the best objective improves by less than `tol`
    /// over `patience` iterations.
    pub tol: f64,
    pub patience: usize,
    pub init: DnxInit,
    /// Accelerated projected-gradient iterations run after the softmax
    /// phase. The softmax map cannot reach simplex faces and its gradient
    /// carries a factor of each coordinate's probability, so coordinates
    /// driven near zero stall; the polish phase has neither problem and
    /// inherits the global optimum guarantee of the convex program.
    pub polish_iters: usize,
}

impl Default for DnxConfig {
    fn default() -> Self {
        DnxConfig {
            learning_rate: 0.1,
            max_iters: 500,
            tol: 1e-10,
            patience: 25,
            init: DnxInit::Uniform,
            polish_iters: 1500,
        }
    }
}

/// Minimize the masking objective over the simplex: a softmax-parameterized
/// adaptive-moment phase followed by an accelerated projected-gradient
/// polish. Returns the best simplex point seen.
pub fn dnx_explain(s: &SgcSurrogate, u: usize, config: &DnxConfig) -> Explanation {
    let started = Instant::now();
    let system = contribution_system(s, u);
    let k = system.candidates.len();

    let mut logits: Vec<f64> = match config.init {
        DnxInit::Uniform => vec![0.0; k],
        DnxInit::Random { seed } => {
            // Modest scale: large negative logits freeze their coordinate
            // (the softmax gradient carries a factor of the probability).
            let mut rng = node_stream(seed, "dnx-init", u);
            (0..k)
                .map(|_| 0.3 * crate::rng::standard_normal(&mut rng))
                .collect()
        }
    };

    let mut opt = Adam::new(k, config.learning_rate, 0.0, false);
    let mut scores = simplex_from_logits(&logits);
    let mut best_scores = scores.clone();
    let mut best_value = objective_from_system(&system, &scores);
    let mut stagnant = 0usize;
    let mut iterations = 0usize;

    for iter in 0..config.max_iters {
        iterations += 1;
        // Cosine decay tightens the tail of the run; a constant step keeps
        // oscillating around the optimum instead of settling.
        let progress = iter as f64 / config.max_iters as f64;
        opt.set_lr(config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        let residual = residual_from_system(&system, &scores);
        let value = residual.dot(&residual);
        if !value.is_finite() {
            break;
        }
        if best_value - value > config.tol {
            best_value = value;
            best_scores.copy_from_slice(&scores);
            stagnant = 0;
        } else {
            if value < best_value {
                best_value = value;
                best_scores.copy_from_slice(&scores);
            }
            stagnant += 1;
            if stagnant >= config.patience {
                break;
            }
        }
        // Chain rule through the softmax: g_eta = E .* (g - <E, g>).
        let grad_scores: Vec<f64> = (0..k)
            .map(|j| 2.0 * system.rows.row(j).dot(&residual))
            .collect();
        let inner: f64 = scores.iter().zip(&grad_scores).map(|(&e, &g)| e * g).sum();
        let grad_logits: Vec<f64> = (0..k).map(|j| scores[j] * (grad_scores[j] - inner)).collect();
        opt.step(&mut logits, &grad_logits);
        scores = simplex_from_logits(&logits);
    }

    let polish_iters = polish(&system, &mut best_scores, &mut best_value, config.polish_iters);

    Explanation {
        node: u,
        method: ExplainMethod::Dnx,
        candidates: system.candidates,
        scores: best_scores,
        objective: Some(best_value),
        iterations: Some(iterations + polish_iters),
        millis: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Accelerated projected gradient on the simplex with step 1/L, warm
/// started from the softmax solution. Updates `best` in place.
fn polish(
    system: &ContributionSystem,
    best_scores: &mut Vec<f64>,
    best_value: &mut f64,
    max_iters: usize,
) -> usize {
    let k = best_scores.len();
    if k <= 1 || max_iters == 0 {
        return 0;
    }
    // Curvature bound: the Hessian is 2 M M^T, so L = 2 |M|_2^2.
    let lipschitz = 2.0 * crate::numeric::spectral_norm(system.rows.view()).powi(2);
    if lipschitz <= 1e-300 {
        return 0;
    }
    let step = 1.0 / (lipschitz * 1.01);

    let mut current = best_scores.clone();
    let mut momentum_point = current.clone();
    let mut t_acc = 1.0f64;
    let mut iterations = 0usize;
    for _ in 0..max_iters {
        iterations += 1;
        let residual = residual_from_system(system, &momentum_point);
        let mut candidate: Vec<f64> = (0..k)
            .map(|j| momentum_point[j] - step * 2.0 * system.rows.row(j).dot(&residual))
            .collect();
        project_onto_simplex(&mut candidate);
        let value = objective_from_system(system, &candidate);
        if value < *best_value {
            *best_value = value;
            best_scores.copy_from_slice(&candidate);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        let mix = (t_acc - 1.0) / t_next;
        momentum_point = (0..k)
            .map(|j| candidate[j] + mix * (candidate[j] - current[j]))
            .collect();
        t_acc = t_next;
        current = candidate;
    }
    iterations
}

/// Euclidean projection onto the probability simplex.
fn project_onto_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, &value) in sorted.iter().enumerate() {
        cumulative += value;
        let candidate_tau = (cumulative - 1.0) / (j + 1) as f64;
        if value - candidate_tau > 0.0 {
            tau = candidate_tau;
        } else {
            break;
        }
    }
    for value in v.iter_mut() {
        *value = (*value - tau).max(0.0);
    }
}

fn simplex_from_logits(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Closed-form scores: each candidate's logit contribution projected onto
/// the target's centered logit vector. Deterministic; the scores sum to the
/// squared norm of the centered logits.
pub fn fastdnx_explain(s: &SgcSurrogate, u: usize) -> Explanation {
    let started = Instant::now();
    let system = contribution_system(s, u);
    let scores: Vec<f64> = (0..system.candidates.len())
        .map(|j| system.rows.row(j).dot(&system.total))
        .collect();
    Explanation {
        node: u,
        method: ExplainMethod::FastDnx,
        candidates: system.candidates,
        scores,
        objective: None,
        iterations: None,
        millis: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Scores are the target's row of the powered operator.
pub fn adjacency_baseline_explain(adj_pow: &NormalizedAdjacency, u: usize) -> Explanation {
    let started = Instant::now();
    let (support, weights) = adj_pow.row(u);
    Explanation {
        node: u,
        method: ExplainMethod::AdjBaseline,
        candidates: support.to_vec(),
        scores: weights.to_vec(),
        objective: None,
        iterations: None,
        millis: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Edge scores from node scores: an edge gets the sum of its endpoint
/// scores, with nodes outside the candidates contributing zero. Output is
/// parallel to `g.edges()`.
pub fn node_scores_to_edge_scores(e: &Explanation, g: &Graph) -> Vec<f64> {
    g.edges()
        .iter()
        .map(|&(a, b)| e.score_of(a) + e.score_of(b))
        .collect()
}

/// Node scores from edge scores: each node gets the mean score of its
/// incident edges, zero for isolated nodes. `edge_scores` is parallel to
/// `g.edges()`.
pub fn edge_scores_to_node_scores(edge_scores: &[f64], g: &Graph) -> Vec<f64> {
    assert_eq!(edge_scores.len(), g.num_edges(), "edge score length mismatch");
    let mut sums = vec![0.0f64; g.n()];
    for (&(a, b), &s) in g.edges().iter().zip(edge_scores) {
        sums[a] += s;
        sums[b] += s;
    }
    (0..g.n())
        .map(|u| {
            let deg = g.degree(u);
            if deg == 0 {
                0.0
            } else {
                sums[u] / deg as f64
            }
        })
        .collect()
}

/// The masking objective written as `0.5 E^T Q E + E^T c + constant`,
/// restricted to the candidates of one node.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub q: Array2<f64>,
    pub c: Array1<f64>,
    pub constant: f64,
    pub candidates: Vec<usize>,
}

impl QuadraticForm {
    pub fn value(&self, scores: &[f64]) -> f64 {
        let e = Array1::from_vec(scores.to_vec());
        0.5 * e.dot(&self.q.dot(&e)) + e.dot(&self.c) + self.constant
    }
}

/// Expand the objective into its quadratic form: `Q = 2 M M^T`,
/// `c = -2 M w`, `constant = |w|^2`, where `M` stacks the candidate
/// contributions and `w` is their sum.
pub fn build_quadratic_form(s: &SgcSurrogate, u: usize) -> QuadraticForm {
    let system = contribution_system(s, u);
    let q = system.rows.dot(&system.rows.t()).mapv(|v| 2.0 * v);
    let c = system.rows.dot(&system.total).mapv(|v| -2.0 * v);
    let constant = system.total.dot(&system.total);
    QuadraticForm {
        q,
        c,
        constant,
        candidates: system.candidates,
    }
}

/// Convexity evidence for one node's quadratic form.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub symmetry_gap: f64,
    pub min_eigenvalue: f64,
    /// Largest |quadratic form - direct objective| over sampled scores.
    pub max_value_gap: f64,
    pub samples: usize,
    pub ok: bool,
}

/// Check symmetry, positive semidefiniteness and agreement with the direct
/// objective on random score vectors.
pub fn verify_convexity(
    s: &SgcSurrogate,
    u: usize,
    q: &QuadraticForm,
    samples: usize,
    seed: u64,
) -> ConvexityReport {
    let k = q.candidates.len();
    let mut symmetry_gap = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            symmetry_gap = symmetry_gap.max((q.q[[i, j]] - q.q[[j, i]]).abs());
        }
    }
    let min_eigenvalue = symmetric_eigenvalues(&q.q).first().copied().unwrap_or(0.0);
    let mut rng = node_stream(seed, "convexity-check", u);
    let mut max_value_gap = 0.0f64;
    for _ in 0..samples {
        let scores: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let direct = dnx_objective(s, u, &scores);
        max_value_gap = max_value_gap.max((q.value(&scores) - direct).abs());
    }
    ConvexityReport {
        symmetry_gap,
        min_eigenvalue,
        max_value_gap,
        samples,
        ok: symmetry_gap <= 1e-10 && min_eigenvalue >= -1e-8 && max_value_gap <= 1e-8,
    }
}

/// An explainer bound to its inputs, for batch use.
pub enum Explainer<'a> {
    Dnx { surrogate: &'a SgcSurrogate, config: DnxConfig },
    FastDnx { surrogate: &'a SgcSurrogate },
    AdjBaseline { adj_pow: &'a NormalizedAdjacency },
}

impl Explainer<'_> {
    pub fn method(&self) -> ExplainMethod {
        match self {
            Explainer::Dnx { .. } => ExplainMethod::Dnx,
            Explainer::FastDnx { .. } => ExplainMethod::FastDnx,
            Explainer::AdjBaseline { .. } => ExplainMethod::AdjBaseline,
        }
    }

    pub fn explain(&self, u: usize) -> Explanation {
        match self {
            Explainer::Dnx { surrogate, config } => dnx_explain(surrogate, u, config),
            Explainer::FastDnx { surrogate } => fastdnx_explain(surrogate, u),
            Explainer::AdjBaseline { adj_pow } => adjacency_baseline_explain(adj_pow, u),
        }
    }

    /// Explain many nodes in parallel; results ordered by node id.
    pub fn explain_many(&self, nodes: &[usize]) -> Vec<Explanation> {
        let mut sorted: Vec<usize> = nodes.to_vec();
        sorted.sort_unstable();
        sorted.par_iter().map(|&u| self.explain(u)).collect()
    }
}

/// Write explanations as line-delimited JSON. The first line is a header
/// record carrying the method name and caller-supplied metadata pairs.
pub fn write_explanations(
    path: &Path,
    method: ExplainMethod,
    metadata: &[(String, String)],
    explanations: &[Explanation],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("{\"format\":\"explanations/v1\"");
    let _ = write!(out, ",\"method\":{}", json_str(method.as_str()));
    for (key, value) in metadata {
        let _ = write!(out, ",{}:{}", json_str(key), json_str(value));
    }
    out.push_str("}\n");
    for e in explanations {
        let _ = write!(
            out,
            "{{\"node\":{},\"method\":{},\"candidates\":{},\"scores\":{}",
            e.node,
            json_str(e.method.as_str()),
            fmt_usize_slice(&e.candidates),
            fmt_f64_slice(&e.scores)
        );
        match e.objective {
            Some(v) => {
                let _ = write!(out, ",\"objective\":{}", fmt_f64(v));
            }
            None => out.push_str(",\"objective\":null"),
        }
        match e.iterations {
            Some(v) => {
                let _ = write!(out, ",\"iterations\":{v}");
            }
            None => out.push_str(",\"iterations\":null"),
        }
        let _ = writeln!(out, ",\"millis\":{}}}", fmt_f64(e.millis));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read an explanation file; returns the header metadata and the records.
pub fn read_explanations(path: &Path) -> Result<(ExplanationHeader, Vec<Explanation>)> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::parse(&origin, "empty explanation file"))?;
    let header: ExplanationHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(&origin, format!("header: {e}")))?;
    if header.format != "explanations/v1" {
        return Err(Error::parse(&origin, format!("unknown format `{}`", header.format)));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExplanation = serde_json::from_str(line)
            .map_err(|e| Error::parse(&origin, format!("line {}: {e}", lineno + 2)))?;
        if raw.candidates.len() != raw.scores.len() {
            return Err(Error::parse(
                &origin,
                format!("line {}: candidate/score length mismatch", lineno + 2),
            ));
        }
        out.push(Explanation {
            node: raw.node,
            method: raw.method.parse()?,
            candidates: raw.candidates,
            scores: raw.scores,
            objective: raw.objective,
            iterations: raw.iterations,
            millis: raw.millis,
        });
    }
    Ok((header, out))
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExplanationHeader {
    pub format: String,
    pub method: String,
    #[serde(default)]
    pub dataset_sha256: Option<String>,
    #[serde(default)]
    pub surrogate_sha256: Option<String>,
    #[serde(default)]
    pub seed: Option<String>,
}

#[derive(Deserialize)]
struct RawExplanation {
    node: usize,
    method: String,
    candidates: Vec<usize>,
    scores: Vec<f64>,
    objective: Option<f64>,
    iterations: Option<usize>,
    millis: f64,
}
