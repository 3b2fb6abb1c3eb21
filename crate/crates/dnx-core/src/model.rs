//! The black-box classifier: a fixed-depth graph convolutional network with
//! a two-layer dense head, trained full-batch with hand-derived gradients.
//!
//! Downstream stages never see gradients or hidden activations. They probe
//! through [`BlackBoxModel`] or consume a [`PredictionMatrix`], which can
//! also be loaded from a file to explain models trained elsewhere.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{build_normalized_adjacency, FeatureMatrix, NormalizedAdjacency};
use crate::numeric::{relu_backward_inplace, relu_inplace, softmax_rows, Adam};
use crate::rng::substream;
use crate::textio::fmt_f64_slice;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Probe-only contract: node features in, per-node class probabilities out.
/// The graph operator is fixed at construction; every implementation must be
/// deterministic given its parameters.
pub trait BlackBoxModel: Sync {
    fn predict(&self, features: &FeatureMatrix) -> PredictionMatrix;

    /// Probabilities for a single node. Defaults to a full forward pass.
    fn predict_node(&self, node: usize, features: &FeatureMatrix) -> Array1<f64> {
        self.predict(features).probs().row(node).to_owned()
    }

    fn num_classes(&self) -> usize;

    fn model_id(&self) -> &str;
}

/// Row-stochastic class probabilities with a provenance tag.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    probs: Array2<f64>,
    provenance: String,
}

impl PredictionMatrix {
    /// Validates non-negativity and row sums within 1e-9.
    pub fn new(probs: Array2<f64>, provenance: impl Into<String>) -> Result<Self> {
        for (i, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::InvalidData(format!(
                    "prediction row {i} has a negative or non-finite entry"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidData(format!(
                    "prediction row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(PredictionMatrix {
            probs,
            provenance: provenance.into(),
        })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn n(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn row(&self, u: usize) -> ndarray::ArrayView1<'_, f64> {
        self.probs.row(u)
    }

    /// Argmax class per node, ties to the lowest class id.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| argmax(row.as_slice().expect("contiguous")))
            .collect()
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Load a delimited-text prediction matrix: one node per line, `C` floats
/// per row, `#` lines ignored. Rows must sum to 1 within 1e-6 and are then
/// renormalized exactly; negative entries are rejected.
pub fn load_predictions(path: &Path) -> Result<PredictionMatrix> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    parse_predictions(&text, &origin)
}

pub fn parse_predictions(text: &str, origin: &str) -> Result<PredictionMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(origin, format!("line {}: bad float `{tok}`", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(origin, "no prediction rows"));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::parse(origin, "ragged prediction rows"));
    }
    let mut probs = Array2::<f64>::zeros((rows.len(), c));
    for (i, row) in rows.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::parse(origin, format!("row {i}: negative probability")));
        }
        // The 1e-12 pad keeps boundary rows like 1.000001 inside the rule.
        if (sum - 1.0).abs() > 1e-6 + 1e-12 {
            return Err(Error::parse(
                origin,
                format!("row {i} sums to {sum}, outside the 1e-6 tolerance"),
            ));
        }
        for (j, &p) in row.iter().enumerate() {
            probs[[i, j]] = p / sum;
        }
    }
    PredictionMatrix::new(probs, "external")
}

pub fn save_predictions(pm: &PredictionMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# predictions/v1 provenance={}", pm.provenance());
    for row in pm.probs().rows() {
        let cells: Vec<String> = row.iter().map(|v| crate::textio::fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Three graph convolutions (ReLU) followed by a two-layer dense head and a
/// row-wise softmax. Layout: `[d->h, h->h, h->h] ++ [h->m, m->C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

pub const GCN_CONV_LAYERS: usize = 3;

impl GcnModel {
    pub fn dims(&self) -> Result<(usize, usize, usize, usize)> {
        if self.weights.len() != 5 || self.biases.len() != 5 {
            return Err(Error::DimensionMismatch("expected 5 parameter layers".into()));
        }
        let d = self.weights[0].nrows();
        let h = self.weights[0].ncols();
        let m = self.weights[3].ncols();
        let c = self.weights[4].ncols();
        let chain = [
            (self.weights[1].dim(), (h, h)),
            (self.weights[2].dim(), (h, h)),
            (self.weights[3].dim(), (h, m)),
            (self.weights[4].dim(), (m, c)),
        ];
        for (got, want) in chain {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "layer shape {got:?}, expected {want:?}"
                )));
            }
        }
        for (i, b) in self.biases.iter().enumerate() {
            if b.len() != self.weights[i].ncols() {
                return Err(Error::DimensionMismatch(format!("bias {i} length mismatch")));
            }
        }
        Ok((d, h, m, c))
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights[4].ncols()
    }

    /// Symmetric uniform init scaled by 1/sqrt(fan_in), seeded.
    pub fn init(in_dim: usize, hidden: usize, mlp_hidden: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = substream(seed, "train-init");
        let shapes = [
            (in_dim, hidden),
            (hidden, hidden),
            (hidden, hidden),
            (hidden, mlp_hidden),
            (mlp_hidden, num_classes),
        ];
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (rows, cols) in shapes {
            let scale = 1.0 / (rows as f64).sqrt();
            let w = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale));
            weights.push(w);
            biases.push(Array1::zeros(cols));
        }
        GcnModel { weights, biases }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        s.push_str("{\n  \"format\": \"gcn/v1\",\n  \"layers\": [\n");
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if i > 0 {
                s.push_str(",\n");
            }
            let flat: Vec<f64> = w.iter().copied().collect();
            let _ = write!(
                s,
                "    {{\"rows\": {}, \"cols\": {}, \"weight\": {}, \"bias\": {}}}",
                w.nrows(),
                w.ncols(),
                fmt_f64_slice(&flat),
                fmt_f64_slice(b.as_slice().expect("contiguous"))
            );
        }
        s.push_str("\n  ]\n}\n");
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GcnModel> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        let raw: RawGcn =
            serde_json::from_str(&text).map_err(|e| Error::parse(&origin, e.to_string()))?;
        if raw.format != "gcn/v1" {
            return Err(Error::parse(&origin, format!("unknown format `{}`", raw.format)));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, layer) in raw.layers.into_iter().enumerate() {
            if layer.weight.len() != layer.rows * layer.cols {
                return Err(Error::parse(&origin, format!("layer {i}: weight length mismatch")));
            }
            if layer.bias.len() != layer.cols {
                return Err(Error::parse(&origin, format!("layer {i}: bias length mismatch")));
            }
            weights.push(
                Array2::from_shape_vec((layer.rows, layer.cols), layer.weight)
                    .map_err(|e| Error::parse(&origin, e.to_string()))?,
            );
            biases.push(Array1::from_vec(layer.bias));
        }
        let model = GcnModel { weights, biases };
        model.dims().map_err(|e| Error::parse(&origin, e.to_string()))?;
        Ok(model)
    }
}

#[derive(Deserialize)]
struct RawGcn {
    format: String,
    layers: Vec<RawLayer>,
}

#[derive(Deserialize)]
struct RawLayer {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// Intermediate activations of one forward pass, kept for backprop.
struct ForwardPass {
    conv_inputs: Vec<Array2<f64>>, // A @ H_prev per conv layer
    pre_acts: Vec<Array2<f64>>,    // Z per layer (5 entries)
    activations: Vec<Array2<f64>>, // H per layer (4 entries, before the head output)
    probs: Array2<f64>,
}

fn forward_pass(model: &GcnModel, adj: &NormalizedAdjacency, x: &FeatureMatrix) -> ForwardPass {
    let mut conv_inputs = Vec::with_capacity(GCN_CONV_LAYERS);
    let mut pre_acts = Vec::with_capacity(5);
    let mut activations = Vec::with_capacity(4);
    let mut h = x.as_array().clone();
    for layer in 0..GCN_CONV_LAYERS {
        let propagated = adj.rows().mul_dense(h.view());
        let mut z = propagated.dot(&model.weights[layer]) + &model.biases[layer];
        conv_inputs.push(propagated);
        pre_acts.push(z.clone());
        relu_inplace(&mut z);
        activations.push(z.clone());
        h = z;
    }
    let mut z4 = h.dot(&model.weights[3]) + &model.biases[3];
    pre_acts.push(z4.clone());
    relu_inplace(&mut z4);
    activations.push(z4.clone());
    let z5 = z4.dot(&model.weights[4]) + &model.biases[4];
    pre_acts.push(z5.clone());
    let probs = softmax_rows(&z5);
    ForwardPass {
        conv_inputs,
        pre_acts,
        activations,
        probs,
    }
}

/// Forward pass through the network; `adj` must be the power-1 operator.
pub fn gcn_forward(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
) -> Result<PredictionMatrix> {
    let (d, ..) = model.dims()?;
    if adj.power() != 1 {
        return Err(Error::InvalidData(format!(
            "gcn_forward needs the power-1 operator, got power {}",
            adj.power()
        )));
    }
    if x.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "features have dim {}, model expects {d}",
            x.dim()
        )));
    }
    if x.n() != adj.n() {
        return Err(Error::DimensionMismatch(format!(
            "features rows {} != graph nodes {}",
            x.n(),
            adj.n()
        )));
    }
    let pass = forward_pass(model, adj, x);
    PredictionMatrix::new(pass.probs, "gcn")
}

/// Mean cross-entropy over masked nodes plus parameter gradients.
pub fn gcn_loss_and_grads(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, Vec<Array2<f64>>, Vec<Array1<f64>>)> {
    model.dims()?;
    let pass = forward_pass(model, adj, x);
    let n_masked = mask.iter().filter(|&&m| m).count();
    if n_masked == 0 {
        return Err(Error::InvalidData("empty training mask".into()));
    }
    let scale = 1.0 / n_masked as f64;
    let mut loss = 0.0;
    let mut grad_logits = pass.probs.clone();
    for u in 0..labels.len() {
        if mask[u] {
            loss -= pass.probs[[u, labels[u]]].max(1e-300).ln();
            grad_logits[[u, labels[u]]] -= 1.0;
        } else {
            grad_logits.row_mut(u).fill(0.0);
        }
    }
    loss *= scale;
    grad_logits.mapv_inplace(|g| g * scale);

    let mut w_grads = vec![Array2::zeros((0, 0)); 5];
    let mut b_grads = vec![Array1::zeros(0); 5];

    // Head layer 5: Z5 = H4 W5 + b5.
    w_grads[4] = pass.activations[3].t().dot(&grad_logits);
    b_grads[4] = grad_logits.sum_axis(Axis(0));
    let mut grad = grad_logits.dot(&model.weights[4].t());
    relu_backward_inplace(&mut grad, &pass.pre_acts[3]);

    // Head layer 4: Z4 = H3 W4 + b4.
    w_grads[3] = pass.activations[2].t().dot(&grad);
    b_grads[3] = grad.sum_axis(Axis(0));
    grad = grad.dot(&model.weights[3].t());

    // Conv layers, walking back: Z_l = (A H_{l-1}) W_l + b_l.
    for layer in (0..GCN_CONV_LAYERS).rev() {
        relu_backward_inplace(&mut grad, &pass.pre_acts[layer]);
        w_grads[layer] = pass.conv_inputs[layer].t().dot(&grad);
        b_grads[layer] = grad.sum_axis(Axis(0));
        if layer > 0 {
            // The operator is symmetric, so A^T G = A G.
            grad = adj.rows().mul_dense(grad.dot(&model.weights[layer].t()).view());
        }
    }
    Ok((loss, w_grads, b_grads))
}

/// Training configuration.
#[derive(Debug, Clone)]
pub struct GcnConfig {
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            hidden: 20,
            mlp_hidden: 60,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            max_epochs: 1000,
            patience: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub loss_history: Vec<f64>,
    pub seconds: f64,
}

/// Full-batch training with coupled weight decay and early stopping on
/// validation accuracy. Returns the best-validation parameter snapshot.
pub fn train_gcn(dataset: &Dataset, config: &GcnConfig) -> Result<(GcnModel, TrainReport)> {
    let splits = dataset
        .splits
        .as_ref()
        .ok_or_else(|| Error::InvalidData("dataset has no splits".into()))?;
    let started = std::time::Instant::now();
    let adj = build_normalized_adjacency(&dataset.graph);
    let mut model = GcnModel::init(
        dataset.features.dim(),
        config.hidden,
        config.mlp_hidden,
        dataset.num_classes,
        config.seed,
    );
    let mut optimizers: Vec<(Adam, Adam)> = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| {
            (
                Adam::new(w.len(), config.learning_rate, config.weight_decay, false),
                Adam::new(b.len(), config.learning_rate, config.weight_decay, false),
            )
        })
        .collect();

    let mut best = model.clone();
    let mut best_val = -1.0f64;
    let mut stagnant = 0usize;
    let mut losses = Vec::with_capacity(config.max_epochs);
    let mut epochs_run = 0;

    for _ in 0..config.max_epochs {
        epochs_run += 1;
        let (loss, w_grads, b_grads) =
            gcn_loss_and_grads(&model, &adj, &dataset.features, &dataset.labels, &splits.train)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("training loss became {loss}")));
        }
        losses.push(loss);
        for i in 0..5 {
            let (w_opt, b_opt) = &mut optimizers[i];
            w_opt.step(
                model.weights[i].as_slice_mut().expect("contiguous"),
                w_grads[i].as_slice().expect("contiguous"),
            );
            b_opt.step(
                model.biases[i].as_slice_mut().expect("contiguous"),
                b_grads[i].as_slice().expect("contiguous"),
            );
        }
        let preds = forward_pass(&model, &adj, &dataset.features).probs;
        let val_acc = masked_accuracy(&preds, &dataset.labels, &splits.val);
        if val_acc > best_val {
            best_val = val_acc;
            best = model.clone();
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= config.patience {
                break;
            }
        }
    }

    let preds = forward_pass(&best, &adj, &dataset.features).probs;
    let test_accuracy = masked_accuracy(&preds, &dataset.labels, &splits.test);
    Ok((
        best,
        TrainReport {
            epochs_run,
            best_val_accuracy: best_val,
            test_accuracy,
            loss_history: losses,
            seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

fn masked_accuracy(probs: &Array2<f64>, labels: &[usize], mask: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for u in 0..labels.len() {
        if mask[u] {
            total += 1;
            if argmax(probs.row(u).as_slice().expect("contiguous")) == labels[u] {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// A trained GCN bound to its graph operator, exposed as a black box.
pub struct GcnProbe {
    model: GcnModel,
    adj: Arc<NormalizedAdjacency>,
    id: String,
}

impl GcnProbe {
    pub fn new(model: GcnModel, adj: Arc<NormalizedAdjacency>) -> Result<Self> {
        model.dims()?;
        if adj.power() != 1 {
            return Err(Error::InvalidData("probe needs the power-1 operator".into()));
        }
        Ok(GcnProbe {
            model,
            adj,
            id: "gcn".into(),
        })
    }

    pub fn model(&self) -> &GcnModel {
        &self.model
    }
}

impl BlackBoxModel for GcnProbe {
    fn predict(&self, features: &FeatureMatrix) -> PredictionMatrix {
        gcn_forward(&self.model, &self.adj, features).expect("dims validated at construction")
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn model_id(&self) -> &str {
        &self.id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_setup() -> (NormalizedAdjacency, FeatureMatrix) {
        let g = crate::graph::Graph::new(3, [(0, 1)]).unwrap();
        let adj = build_normalized_adjacency(&g);
        let x = FeatureMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [0.25, 0.5]]).unwrap();
        (adj, x)
    }

    fn zero_model(d: usize, c: usize) -> GcnModel {
        let shapes = [(d, 4), (4, 4), (4, 4), (4, 6), (6, c)];
        GcnModel {
            weights: shapes.iter().map(|&(r, q)| Array2::zeros((r, q))).collect(),
            biases: shapes.iter().map(|&(_, q)| Array1::zeros(q)).collect(),
        }
    }

    #[test]
    fn zero_weights_give_uniform_predictions() {
        let (adj, x) = small_setup();
        let model = zero_model(2, 2);
        let pm = gcn_forward(&model, &adj, &x).unwrap();
        for row in pm.probs().rows() {
            assert!((row[0] - 0.5).abs() < 1e-15);
            assert!((row[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_node_sees_only_its_own_features() {
        let (adj, x) = small_setup();
        let model = GcnModel::init(2, 16, 6, 3, 11);
        let base = gcn_forward(&model, &adj, &x).unwrap();
        // Change features of nodes 0 and 1; node 2 is isolated.
        let x2 = FeatureMatrix::new(array![[5.0, -2.0], [3.0, 7.0], [0.25, 0.5]]).unwrap();
        let moved = gcn_forward(&model, &adj, &x2).unwrap();
        for c in 0..3 {
            assert!((base.probs()[[2, c]] - moved.probs()[[2, c]]).abs() < 1e-12);
        }
        assert!((base.probs()[[0, 0]] - moved.probs()[[0, 0]]).abs() > 1e-9);
    }

    #[test]
    fn forward_is_deterministic() {
        let (adj, x) = small_setup();
        let model = GcnModel::init(2, 4, 6, 2, 3);
        let a = gcn_forward(&model, &adj, &x).unwrap();
        let b = gcn_forward(&model, &adj, &x).unwrap();
        assert_eq!(a.probs(), b.probs());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (adj, _) = small_setup();
        let model = zero_model(5, 2);
        let x = FeatureMatrix::new(array![[1.0], [2.0], [3.0]]).unwrap();
        assert!(gcn_forward(&model, &adj, &x).is_err());
    }

    #[test]
    fn predictions_reject_bad_rows() {
        assert!(PredictionMatrix::new(array![[0.5, 0.6]], "t").is_err());
        assert!(PredictionMatrix::new(array![[-0.1, 1.1]], "t").is_err());
        assert!(PredictionMatrix::new(array![[0.25, 0.75]], "t").is_ok());
    }

    #[test]
    fn prediction_file_rules() {
        let ok = parse_predictions("0.5 0.5\n0.3 0.7\n", "mem").unwrap();
        assert_eq!(ok.n(), 2);
        assert_eq!(ok.provenance(), "external");
        // Slightly off rows are renormalized.
        let renorm = parse_predictions("0.500001 0.5\n", "mem").unwrap();
        assert!((renorm.probs().row(0).sum() - 1.0).abs() < 1e-15);
        // Negative entries and large deviations are rejected.
        assert!(parse_predictions("-0.1 1.1\n", "mem").is_err());
        assert!(parse_predictions("0.7 0.7\n", "mem").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = GcnModel::init(3, 4, 6, 2, 9);
        let dir = std::env::temp_dir().join("dnx-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gcn.model.json");
        model.save(&path).unwrap();
        let back = GcnModel::load(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn train_requires_splits() {
        let g = crate::graph::Graph::new(2, [(0, 1)]).unwrap();
        let d = Dataset {
            name: "t".into(),
            seed: None,
            graph: g,
            features: FeatureMatrix::new(array![[1.0], [1.0]]).unwrap(),
            labels: vec![0, 1],
            num_classes: 2,
            ground_truth: Default::default(),
            motif_of: None,
            splits: None,
        };
        assert!(matches!(
            train_gcn(&d, &GcnConfig::default()),
            Err(Error::InvalidData(_))
        ));
    }
}
