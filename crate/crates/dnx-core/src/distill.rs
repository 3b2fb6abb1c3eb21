//! Fit a linear graph convolution to mimic a black-box classifier by
//! minimizing the KL divergence from the target's soft predictions.
//!
//! The surrogate predicts `softmax(P Theta + b)` where `P` is the powered
//! operator applied to the features, cached once. Fitting is full-batch
//! over all nodes with decoupled weight decay; the objective is convex in
//! `(Theta, b)`, so the zero init is as good as any.

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, NormalizedAdjacency};
use crate::model::{BlackBoxModel, PredictionMatrix};
use crate::numeric::{softmax, softmax_rows, Adam};
use crate::textio::fmt_f64_slice;
use ndarray::{Array1, Array2, Axis};
use serde::Deserialize;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// The fitted linear surrogate with its cached propagated features.
#[derive(Debug, Clone)]
pub struct SgcSurrogate {
    theta: Array2<f64>,
    bias: Array1<f64>,
    depth: usize,
    adj_pow: Arc<NormalizedAdjacency>,
    features: Arc<FeatureMatrix>,
    /// `A^L X`, cached.
    propagated: Array2<f64>,
    /// `X Theta`, cached for the explainers.
    feature_logits: Array2<f64>,
}

impl SgcSurrogate {
    /// `adj_pow` must already be the depth-th power of the base operator.
    pub fn new(
        theta: Array2<f64>,
        bias: Array1<f64>,
        depth: usize,
        adj_pow: Arc<NormalizedAdjacency>,
        features: Arc<FeatureMatrix>,
    ) -> Result<Self> {
        if adj_pow.power() != depth {
            return Err(Error::InvalidData(format!(
                "operator power {} != surrogate depth {depth}",
                adj_pow.power()
            )));
        }
        if features.n() != adj_pow.n() {
            return Err(Error::DimensionMismatch(format!(
                "features rows {} != graph nodes {}",
                features.n(),
                adj_pow.n()
            )));
        }
        if theta.nrows() != features.dim() {
            return Err(Error::DimensionMismatch(format!(
                "theta rows {} != feature dim {}",
                theta.nrows(),
                features.dim()
            )));
        }
        if bias.len() != theta.ncols() {
            return Err(Error::DimensionMismatch("bias length != classes".into()));
        }
        let propagated = adj_pow.mul_features(&features);
        let feature_logits = features.as_array().dot(&theta);
        Ok(SgcSurrogate {
            theta,
            bias,
            depth,
            adj_pow,
            features,
            propagated,
            feature_logits,
        })
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn adj_pow(&self) -> &NormalizedAdjacency {
        &self.adj_pow
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    /// Cached `A^L X`.
    pub fn propagated(&self) -> &Array2<f64> {
        &self.propagated
    }

    /// Cached `X Theta`.
    pub fn feature_logits(&self) -> &Array2<f64> {
        &self.feature_logits
    }

    pub fn n(&self) -> usize {
        self.adj_pow.n()
    }

    /// Pre-softmax logits `P Theta + b` for every node.
    pub fn logits(&self) -> Array2<f64> {
        self.propagated.dot(&self.theta) + &self.bias
    }

    /// Logits of one node.
    pub fn logits_node(&self, u: usize) -> Array1<f64> {
        self.propagated.row(u).dot(&self.theta) + &self.bias
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        s.push_str("{\n  \"format\": \"sgc/v1\",\n");
        let _ = writeln!(s, "  \"depth\": {},", self.depth);
        let _ = writeln!(s, "  \"in_dim\": {},", self.theta.nrows());
        let _ = writeln!(s, "  \"num_classes\": {},", self.theta.ncols());
        let flat: Vec<f64> = self.theta.iter().copied().collect();
        let _ = writeln!(s, "  \"theta\": {},", fmt_f64_slice(&flat));
        let _ = writeln!(
            s,
            "  \"bias\": {}",
            fmt_f64_slice(self.bias.as_slice().expect("contiguous"))
        );
        s.push_str("}\n");
        std::fs::write(path, s)?;
        Ok(())
    }

    /// Rebuild a checkpoint against the dataset's operator and features.
    pub fn load(
        path: &Path,
        adj_pow: Arc<NormalizedAdjacency>,
        features: Arc<FeatureMatrix>,
    ) -> Result<SgcSurrogate> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        let raw: RawSgc =
            serde_json::from_str(&text).map_err(|e| Error::parse(&origin, e.to_string()))?;
        if raw.format != "sgc/v1" {
            return Err(Error::parse(&origin, format!("unknown format `{}`", raw.format)));
        }
        if raw.theta.len() != raw.in_dim * raw.num_classes {
            return Err(Error::parse(&origin, "theta length mismatch"));
        }
        let theta = Array2::from_shape_vec((raw.in_dim, raw.num_classes), raw.theta)
            .map_err(|e| Error::parse(&origin, e.to_string()))?;
        SgcSurrogate::new(theta, Array1::from_vec(raw.bias), raw.depth, adj_pow, features)
    }
}

#[derive(Deserialize)]
struct RawSgc {
    format: String,
    depth: usize,
    in_dim: usize,
    num_classes: usize,
    theta: Vec<f64>,
    bias: Vec<f64>,
}

impl BlackBoxModel for SgcSurrogate {
    fn predict(&self, features: &FeatureMatrix) -> PredictionMatrix {
        let logits = self.adj_pow.mul_features(features).dot(&self.theta) + &self.bias;
        PredictionMatrix::new(softmax_rows(&logits), "sgc").expect("softmax rows are stochastic")
    }

    /// Only the target's row of the operator is needed, so this stays cheap
    /// under repeated feature perturbations.
    fn predict_node(&self, node: usize, features: &FeatureMatrix) -> Array1<f64> {
        let propagated = self.adj_pow.propagate_row(node, features.view());
        let logits = propagated.dot(&self.theta) + &self.bias;
        softmax(logits.view())
    }

    fn num_classes(&self) -> usize {
        self.theta.ncols()
    }

    fn model_id(&self) -> &str {
        "sgc"
    }
}

/// Predictions from the cached propagated features.
pub fn surrogate_predict(s: &SgcSurrogate) -> PredictionMatrix {
    PredictionMatrix::new(softmax_rows(&s.logits()), "sgc").expect("softmax rows are stochastic")
}

/// `KL(targets || probs)`, summed over nodes. Zero target entries
/// contribute zero.
pub fn kl_divergence(targets: &Array2<f64>, probs: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    ndarray::Zip::from(targets).and(probs).for_each(|&t, &p| {
        if t > 0.0 {
            total += t * (t.ln() - p.ln());
        }
    });
    total
}

/// KL objective and its analytic gradients w.r.t. `(Theta, b)` at the given
/// parameters, with `propagated = A^L X` fixed.
pub fn kl_loss_and_grads(
    targets: &PredictionMatrix,
    propagated: &Array2<f64>,
    theta: &Array2<f64>,
    bias: &Array1<f64>,
) -> (f64, Array2<f64>, Array1<f64>) {
    let logits = propagated.dot(theta) + bias;
    let probs = softmax_rows(&logits);
    let loss = kl_divergence(targets.probs(), &probs);
    let diff = &probs - targets.probs();
    let grad_theta = propagated.t().dot(&diff);
    let grad_bias = diff.sum_axis(Axis(0));
    (loss, grad_theta, grad_bias)
}

#[derive(Debug, Clone)]
pub struct DistillConfig {
    pub depth: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Stop when the best KL has not improved by `plateau_tol` for
    /// `plateau_epochs` epochs.
    pub plateau_epochs: usize,
    pub plateau_tol: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            depth: 3,
            learning_rate: 0.1,
            weight_decay: 5e-6,
            max_epochs: 10_000,
            plateau_epochs: 100,
            plateau_tol: 1e-9,
        }
    }
}

/// Distillation quality summary.
#[derive(Debug, Clone)]
pub struct DistillReport {
    pub final_kl: f64,
    /// Fraction of nodes whose argmax matches the target's argmax.
    pub agreement: f64,
    /// Confusion counts indexed `[target_argmax][surrogate_argmax]`.
    pub confusion: Vec<Vec<usize>>,
    pub seconds: f64,
    pub epochs_run: usize,
    /// Max over nodes of the L2 gap between target and surrogate rows.
    pub alpha_hat: f64,
}

/// Fit the surrogate to the target predictions.
pub fn distill(
    targets: &PredictionMatrix,
    adj_pow: Arc<NormalizedAdjacency>,
    features: Arc<FeatureMatrix>,
    config: &DistillConfig,
) -> Result<(SgcSurrogate, DistillReport)> {
    if targets.n() != adj_pow.n() {
        return Err(Error::DimensionMismatch(format!(
            "targets rows {} != graph nodes {}",
            targets.n(),
            adj_pow.n()
        )));
    }
    let started = std::time::Instant::now();
    let d = features.dim();
    let c = targets.num_classes();
    let propagated = adj_pow.mul_features(&features);
    let mut theta = Array2::<f64>::zeros((d, c));
    let mut bias = Array1::<f64>::zeros(c);
    let mut theta_opt = Adam::new(d * c, config.learning_rate, config.weight_decay, true);
    let mut bias_opt = Adam::new(c, config.learning_rate, config.weight_decay, true);

    let mut best_kl = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut final_kl = f64::INFINITY;
    let mut epochs_run = 0usize;
    for _ in 0..config.max_epochs {
        epochs_run += 1;
        let (loss, grad_theta, grad_bias) = kl_loss_and_grads(targets, &propagated, &theta, &bias);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "distillation KL became {loss} at epoch {epochs_run}"
            )));
        }
        final_kl = loss;
        theta_opt.step(
            theta.as_slice_mut().expect("contiguous"),
            grad_theta.as_slice().expect("contiguous"),
        );
        bias_opt.step(
            bias.as_slice_mut().expect("contiguous"),
            grad_bias.as_slice().expect("contiguous"),
        );
        if best_kl - loss > config.plateau_tol {
            best_kl = loss;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= config.plateau_epochs {
                break;
            }
        }
    }

    let surrogate = SgcSurrogate::new(theta, bias, config.depth, adj_pow, features)?;
    let predictions = surrogate_predict(&surrogate);
    let final_kl_exact = kl_divergence(targets.probs(), predictions.probs());
    let _ = final_kl;

    let confusion = confusion_counts(targets, &predictions, c);
    let agreement = agreement_from_confusion(&confusion, targets.n());
    let alpha_hat = max_row_gap(targets, &predictions);

    Ok((
        surrogate,
        DistillReport {
            final_kl: final_kl_exact,
            agreement,
            confusion,
            seconds: started.elapsed().as_secs_f64(),
            epochs_run,
            alpha_hat,
        },
    ))
}

/// Max over nodes of the L2 distance between prediction rows.
pub fn max_row_gap(a: &PredictionMatrix, b: &PredictionMatrix) -> f64 {
    let mut worst = 0.0f64;
    for (ra, rb) in a.probs().rows().into_iter().zip(b.probs().rows()) {
        let gap = ra
            .iter()
            .zip(rb.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(gap);
    }
    worst
}

fn confusion_counts(
    targets: &PredictionMatrix,
    predictions: &PredictionMatrix,
    num_classes: usize,
) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; num_classes]; num_classes];
    let t_labels = targets.argmax_labels();
    let p_labels = predictions.argmax_labels();
    for (t, p) in t_labels.into_iter().zip(p_labels) {
        counts[t][p] += 1;
    }
    counts
}

fn agreement_from_confusion(confusion: &[Vec<usize>], n: usize) -> f64 {
    let diag: usize = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    diag as f64 / n as f64
}

/// Confusion of surrogate argmax against target argmax, plus the binary
/// accuracy after collapsing classes into base vs motif groups.
#[derive(Debug, Clone)]
pub struct ConfusionReport {
    pub matrix: Vec<Vec<usize>>,
    pub multiclass_agreement: f64,
    pub binary_agreement: f64,
}

pub fn distillation_confusion(
    predictions: &PredictionMatrix,
    targets: &PredictionMatrix,
    base_classes: &BTreeSet<usize>,
) -> ConfusionReport {
    let c = targets.num_classes();
    let matrix = confusion_counts(targets, predictions, c);
    let multiclass_agreement = agreement_from_confusion(&matrix, targets.n());
    let mut binary_hits = 0usize;
    for (t, p) in targets
        .argmax_labels()
        .into_iter()
        .zip(predictions.argmax_labels())
    {
        if base_classes.contains(&t) == base_classes.contains(&p) {
            binary_hits += 1;
        }
    }
    ConfusionReport {
        matrix,
        multiclass_agreement,
        binary_agreement: binary_hits as f64 / targets.n() as f64,
    }
}
