//! Node-level explanation of graph neural networks through a distilled
//! linear surrogate.
//!
//! The pipeline has five stages: generate a motif benchmark (or load one
//! from disk), train a small GCN node classifier as the black box, distill
//! it into a simple graph convolution by KL minimization, extract per-node
//! importance scores with one of three explainers (`dnx`, `fastdnx`,
//! `adjbaseline`), and evaluate the scores against ground-truth motifs and
//! against empirical faithfulness bounds.

pub mod dataset;
pub mod distill;
pub mod error;
pub mod explain;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod synth;
pub mod textio;

pub use error::{Error, Result};
