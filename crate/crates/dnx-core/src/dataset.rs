//! Datasets: a graph with node features, labels, optional ground-truth
//! explanation sets and split masks, plus the on-disk text format.
//!
//! # File format
//!
//! A dataset is one JSON document with fixed key order:
//!
//! ```text
//! {
//!   "format": "dataset/v1",
//!   "name": <string>,              optional metadata
//!   "seed": <u64>,                 optional metadata
//!   "n": <node count>,
//!   "num_classes": <C>,
//!   "edges": [[i, j], ...],        i < j, sorted, each edge once
//!   "features": [[f64; d]; n],     17 significant digits
//!   "labels": [usize; n],
//!   "ground_truth": {"u": [v, ...], ...},   optional
//!   "motif_of": [usize | null; n],          optional
//!   "splits": {"train": [bool; n], "val": ..., "test": ...}   optional
//! }
//! ```

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph};
use crate::textio::{fmt_bool_slice, fmt_f64_slice, fmt_usize_slice};
use ndarray::Array2;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

/// Train/val/test boolean masks. Disjoint and covering all nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Splits {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::InvalidData("split mask length != n".into()));
        }
        for u in 0..n {
            let count = self.train[u] as u8 + self.val[u] as u8 + self.test[u] as u8;
            if count != 1 {
                return Err(Error::InvalidData(format!(
                    "node {u} appears in {count} split masks"
                )));
            }
        }
        Ok(())
    }

    pub fn nodes_in(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, &m)| m).map(|(u, _)| u).collect()
    }
}

/// A benchmark instance: graph, features, labels and explanation ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub seed: Option<u64>,
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Ground-truth explanation per motif node: the node set of its motif.
    pub ground_truth: BTreeMap<usize, BTreeSet<usize>>,
    /// Motif id per node, `None` for base nodes.
    pub motif_of: Option<Vec<Option<usize>>>,
    pub splits: Option<Splits>,
}

impl Dataset {
    /// Check the structural invariants; called by loaders and generators.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.features.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "features rows {} != n {}",
                self.features.n(),
                n
            )));
        }
        if self.labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "labels length {} != n {}",
                self.labels.len(),
                n
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::InvalidData(format!(
                "label {bad} >= num_classes {}",
                self.num_classes
            )));
        }
        for (&u, members) in &self.ground_truth {
            if u >= n {
                return Err(Error::InvalidData(format!("ground-truth node {u} >= n")));
            }
            if members.is_empty() {
                return Err(Error::InvalidData(format!("empty ground-truth set for {u}")));
            }
            if let Some(&v) = members.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidData(format!("ground-truth member {v} >= n")));
            }
            if !members.contains(&u) {
                return Err(Error::InvalidData(format!(
                    "ground-truth set of {u} does not contain {u}"
                )));
            }
        }
        if let Some(motif_of) = &self.motif_of {
            if motif_of.len() != n {
                return Err(Error::DimensionMismatch("motif_of length != n".into()));
            }
        }
        if let Some(splits) = &self.splits {
            splits.validate(n)?;
        }
        Ok(())
    }

    /// Nodes carrying a ground-truth explanation, ascending.
    pub fn motif_nodes(&self) -> Vec<usize> {
        self.ground_truth.keys().copied().collect()
    }

    pub fn is_motif_node(&self, u: usize) -> bool {
        self.ground_truth.contains_key(&u)
    }

    /// Class ids that occur on base (non-motif) nodes.
    pub fn base_class_ids(&self) -> BTreeSet<usize> {
        (0..self.graph.n())
            .filter(|u| !self.is_motif_node(*u))
            .map(|u| self.labels[u])
            .collect()
    }

    /// Motif nodes restricted to the test mask, or all motif nodes when the
    /// dataset has no splits.
    pub fn motif_test_nodes(&self) -> Vec<usize> {
        match &self.splits {
            Some(s) => self.motif_nodes().into_iter().filter(|&u| s.test[u]).collect(),
            None => self.motif_nodes(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        let _ = writeln!(s, "  \"format\": \"dataset/v1\",");
        let _ = writeln!(s, "  \"name\": {},", json_string(&self.name));
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "  \"seed\": {seed},");
        }
        let _ = writeln!(s, "  \"n\": {},", self.graph.n());
        let _ = writeln!(s, "  \"num_classes\": {},", self.num_classes);
        s.push_str("  \"edges\": [");
        for (i, &(a, b)) in self.graph.edges().iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "[{a},{b}]");
        }
        s.push_str("],\n");
        s.push_str("  \"features\": [\n");
        for (i, row) in self.features.as_array().rows().into_iter().enumerate() {
            if i > 0 {
                s.push_str(",\n");
            }
            s.push_str("    ");
            s.push_str(&fmt_f64_slice(row.as_slice().expect("contiguous row")));
        }
        s.push_str("\n  ],\n");
        let _ = writeln!(s, "  \"labels\": {},", fmt_usize_slice(&self.labels));
        s.push_str("  \"ground_truth\": {");
        for (i, (u, members)) in self.ground_truth.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let sorted: Vec<usize> = members.iter().copied().collect();
            let _ = write!(s, "\"{u}\":{}", fmt_usize_slice(&sorted));
        }
        s.push_str("},\n");
        if let Some(motif_of) = &self.motif_of {
            s.push_str("  \"motif_of\": [");
            for (i, m) in motif_of.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                match m {
                    Some(id) => {
                        let _ = write!(s, "{id}");
                    }
                    None => s.push_str("null"),
                }
            }
            s.push_str("],\n");
        }
        match &self.splits {
            Some(splits) => {
                s.push_str("  \"splits\": {\n");
                let _ = writeln!(s, "    \"train\": {},", fmt_bool_slice(&splits.train));
                let _ = writeln!(s, "    \"val\": {},", fmt_bool_slice(&splits.val));
                let _ = writeln!(s, "    \"test\": {}", fmt_bool_slice(&splits.test));
                s.push_str("  }\n");
            }
            None => {
                // Keep valid JSON regardless of trailing comma above.
                s.push_str("  \"splits\": null\n");
            }
        }
        s.push_str("}\n");
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Dataset> {
        let raw: RawDataset =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if raw.format != "dataset/v1" {
            return Err(Error::parse(origin, format!("unknown format `{}`", raw.format)));
        }
        let n = raw.n;
        for &(a, b) in &raw.edges {
            if a >= b {
                return Err(Error::parse(
                    origin,
                    format!("edge [{a},{b}] violates i < j ordering"),
                ));
            }
        }
        let graph = Graph::new(n, raw.edges).map_err(|e| Error::parse(origin, e.to_string()))?;
        if raw.features.len() != n {
            return Err(Error::parse(origin, "features row count != n"));
        }
        let d = raw.features.first().map_or(0, Vec::len);
        if raw.features.iter().any(|r| r.len() != d) {
            return Err(Error::parse(origin, "ragged feature rows"));
        }
        let flat: Vec<f64> = raw.features.into_iter().flatten().collect();
        let features = FeatureMatrix::new(
            Array2::from_shape_vec((n, d), flat).map_err(|e| Error::parse(origin, e.to_string()))?,
        )
        .map_err(|e| Error::parse(origin, e.to_string()))?;
        let mut ground_truth = BTreeMap::new();
        for (key, members) in raw.ground_truth {
            let u: usize = key
                .parse()
                .map_err(|_| Error::parse(origin, format!("bad ground-truth key `{key}`")))?;
            ground_truth.insert(u, members.into_iter().collect::<BTreeSet<usize>>());
        }
        let splits = raw.splits.map(|s| Splits {
            train: s.train,
            val: s.val,
            test: s.test,
        });
        let dataset = Dataset {
            name: raw.name.unwrap_or_default(),
            seed: raw.seed,
            graph,
            features,
            labels: raw.labels,
            num_classes: raw.num_classes,
            ground_truth,
            motif_of: raw.motif_of,
            splits,
        };
        dataset.validate().map_err(|e| Error::parse(origin, e.to_string()))?;
        Ok(dataset)
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

#[derive(Deserialize)]
struct RawDataset {
    format: String,
    name: Option<String>,
    seed: Option<u64>,
    n: usize,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    #[serde(default)]
    ground_truth: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    motif_of: Option<Vec<Option<usize>>>,
    #[serde(default)]
    splits: Option<RawSplits>,
}

#[derive(Deserialize)]
struct RawSplits {
    train: Vec<bool>,
    val: Vec<bool>,
    test: Vec<bool>,
}
