//! Seeded generators for the six motif benchmarks.
//!
//! Each dataset is one undirected graph: a random base (preferential
//! attachment or a balanced binary tree) plus node-disjoint motif copies,
//! each tied to the base by a single random edge. Node features are the
//! one-hot encoded degree, labels encode motif roles, and the ground-truth
//! explanation of a motif node is its motif's node set.
//!
//! Generation is single-threaded and consumes one named random stream in a
//! fixed order (base edges, per-motif attachments, inter-community edges,
//! split shuffle), so a seed pins the dataset bit for bit.

use crate::dataset::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph};
use crate::rng::substream;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// The six generated benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetName {
    BaHouse,
    BaCommunity,
    BaGrids,
    TreeCycles,
    TreeGrids,
    BaBottle,
}

impl DatasetName {
    pub const ALL: [DatasetName; 6] = [
        DatasetName::BaHouse,
        DatasetName::BaCommunity,
        DatasetName::BaGrids,
        DatasetName::TreeCycles,
        DatasetName::TreeGrids,
        DatasetName::BaBottle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetName::BaHouse => "ba-house",
            DatasetName::BaCommunity => "ba-community",
            DatasetName::BaGrids => "ba-grids",
            DatasetName::TreeCycles => "tree-cycles",
            DatasetName::TreeGrids => "tree-grids",
            DatasetName::BaBottle => "ba-bottle",
        }
    }

    /// Expected (nodes, labels) for the generated instance.
    pub fn expected_counts(&self) -> (usize, usize) {
        match self {
            DatasetName::BaHouse => (700, 4),
            DatasetName::BaCommunity => (1400, 8),
            DatasetName::BaGrids => (1020, 2),
            DatasetName::TreeCycles => (871, 2),
            DatasetName::TreeGrids => (1231, 2),
            DatasetName::BaBottle => (700, 4),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ba-house" => Ok(DatasetName::BaHouse),
            "ba-community" => Ok(DatasetName::BaCommunity),
            "ba-grids" => Ok(DatasetName::BaGrids),
            "tree-cycles" => Ok(DatasetName::TreeCycles),
            "tree-grids" => Ok(DatasetName::TreeGrids),
            "ba-bottle" => Ok(DatasetName::BaBottle),
            other => Err(Error::UnknownDataset(other.to_string())),
        }
    }
}

/// Generation recipe: dataset, seed and the structural counts.
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub name: DatasetName,
    pub seed: u64,
    /// Nodes in the base graph (per community for ba-community).
    pub base_size: usize,
    /// Motif copies (per community for ba-community).
    pub motif_count: usize,
    /// Preferential-attachment edges per new node in BA bases.
    pub attachment: usize,
    /// Random base-to-base edges joining the two ba-community halves.
    pub inter_community_edges: usize,
}

impl GenSpec {
    pub fn new(name: DatasetName, seed: u64) -> Self {
        let (base_size, motif_count) = match name {
            DatasetName::BaHouse | DatasetName::BaBottle | DatasetName::BaGrids => (300, 80),
            DatasetName::BaCommunity => (300, 80),
            DatasetName::TreeCycles => (511, 60),
            DatasetName::TreeGrids => (511, 80),
        };
        GenSpec {
            name,
            seed,
            base_size,
            motif_count,
            attachment: 5,
            inter_community_edges: 16,
        }
    }
}

/// A motif shape: local edges plus the role label of each local node.
/// Role 0 is reserved for base nodes; motif roles start at 1.
/// `anchor` is the local node carrying the attachment edge, `None` for a
/// random choice per copy.
struct MotifShape {
    edges: &'static [(usize, usize)],
    roles: &'static [usize],
    anchor: Option<usize>,
}

impl MotifShape {
    fn size(&self) -> usize {
        self.roles.len()
    }
}

/// Square 0-1-2-3 with roof node 4 adjacent to 0 and 1.
/// Roles: roof-adjacent square nodes 1, far square nodes 2, roof 3.
const HOUSE: MotifShape = MotifShape {
    edges: &[(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)],
    roles: &[1, 1, 2, 2, 3],
    anchor: None,
};

/// 3x3 lattice, row-major local ids, with diagonals from the center to
/// three corners. Two constraints shape it: the motif diameter must stay
/// within the 3-hop candidate sets used everywhere, and after attachment
/// every motif degree bucket must be shared across copies without colliding
/// with the base (minimum base degree is the attachment count). Attaching
/// through the diagonal-less corner 8 lifts it to the rim bucket.
const GRID3X3: MotifShape = MotifShape {
    edges: &[
        (0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8),
        (0, 3), (3, 6), (1, 4), (4, 7), (2, 5), (5, 8),
        (0, 4), (2, 4), (4, 6),
    ],
    roles: &[1, 1, 1, 1, 1, 1, 1, 1, 1],
    anchor: Some(8),
};

/// Six-node ring.
const CYCLE6: MotifShape = MotifShape {
    edges: &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)],
    roles: &[1, 1, 1, 1, 1, 1],
    anchor: None,
};

/// Five-node bottle, a stand-in shape: pentagon 0-1-2-3-4 with the chord
/// 1-4 as the neck, attached through the cap node 0 so that every motif
/// degree bucket is shared by unattached motif nodes.
/// Roles: cap 1, shoulders (chord endpoints) 2, body 3.
const BOTTLE: MotifShape = MotifShape {
    edges: &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 4)],
    roles: &[1, 2, 3, 3, 2],
    anchor: Some(0),
};

/// Generate a dataset. The same spec yields a bit-identical result.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    let mut rng = substream(spec.seed, "gen");
    let mut builder = GraphBuilder::default();

    match spec.name {
        DatasetName::BaHouse => {
            build_community(&mut builder, spec, &HOUSE, BaseKind::Ba, 0, 0, &mut rng);
        }
        DatasetName::BaBottle => {
            build_community(&mut builder, spec, &BOTTLE, BaseKind::Ba, 0, 0, &mut rng);
        }
        DatasetName::BaGrids => {
            build_community(&mut builder, spec, &GRID3X3, BaseKind::Ba, 0, 0, &mut rng);
        }
        DatasetName::TreeCycles => {
            build_community(&mut builder, spec, &CYCLE6, BaseKind::Tree, 0, 0, &mut rng);
        }
        DatasetName::TreeGrids => {
            build_community(&mut builder, spec, &GRID3X3, BaseKind::Tree, 0, 0, &mut rng);
        }
        DatasetName::BaCommunity => {
            let half = spec.base_size + spec.motif_count * HOUSE.size();
            build_community(&mut builder, spec, &HOUSE, BaseKind::Ba, 0, 0, &mut rng);
            build_community(&mut builder, spec, &HOUSE, BaseKind::Ba, half, 4, &mut rng);
            // Random base-to-base bridges between the halves.
            let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
            while used.len() < spec.inter_community_edges {
                let a = rng.gen_range(0..spec.base_size);
                let b = half + rng.gen_range(0..spec.base_size);
                if used.insert((a, b)) {
                    builder.edges.push((a, b));
                }
            }
        }
    }

    let n = builder.labels.len();
    let num_classes = builder.labels.iter().max().map_or(0, |&m| m + 1);
    let (want_n, want_classes) = spec.name.expected_counts();
    if n != want_n || num_classes != want_classes {
        return Err(Error::InvalidData(format!(
            "{} generated ({n} nodes, {num_classes} labels), expected ({want_n}, {want_classes})",
            spec.name
        )));
    }

    let graph = Graph::new(n, builder.edges)?;
    let features = one_hot_degree_features(&graph);
    let splits = random_splits(n, &mut rng);

    let dataset = Dataset {
        name: spec.name.to_string(),
        seed: Some(spec.seed),
        graph,
        features,
        labels: builder.labels,
        num_classes,
        ground_truth: builder.ground_truth,
        motif_of: Some(builder.motif_of),
        splits: Some(splits),
    };
    dataset.validate()?;
    Ok(dataset)
}

#[derive(Default)]
struct GraphBuilder {
    edges: Vec<(usize, usize)>,
    labels: Vec<usize>,
    motif_of: Vec<Option<usize>>,
    ground_truth: BTreeMap<usize, BTreeSet<usize>>,
}

enum BaseKind {
    Ba,
    Tree,
}

/// Emit one base graph plus its motifs starting at node id `offset`.
/// Labels are shifted by `label_offset` (role 0 stays the base label).
fn build_community(
    builder: &mut GraphBuilder,
    spec: &GenSpec,
    motif: &MotifShape,
    base: BaseKind,
    offset: usize,
    label_offset: usize,
    rng: &mut ChaCha8Rng,
) {
    let base_n = spec.base_size;
    let base_edges = match base {
        BaseKind::Ba => barabasi_albert(base_n, spec.attachment, rng),
        BaseKind::Tree => balanced_binary_tree(base_n),
    };
    builder
        .edges
        .extend(base_edges.into_iter().map(|(a, b)| (a + offset, b + offset)));
    builder.labels.extend(std::iter::repeat(label_offset).take(base_n));
    builder.motif_of.extend(std::iter::repeat(None).take(base_n));

    let motif_id_offset = builder.ground_truth.len() / motif.size().max(1);
    for m in 0..spec.motif_count {
        // Nodes are appended in order, so the labels length is the next id.
        let start = builder.labels.len();
        let members: BTreeSet<usize> = (0..motif.size()).map(|i| start + i).collect();
        for &(a, b) in motif.edges {
            builder.edges.push((start + a, start + b));
        }
        for local in 0..motif.size() {
            builder.labels.push(motif.roles[local] + label_offset);
            builder.motif_of.push(Some(motif_id_offset + m));
            builder.ground_truth.insert(start + local, members.clone());
        }
        // One attachment edge into a random base node of this community.
        let local_anchor = motif.anchor.unwrap_or_else(|| rng.gen_range(0..motif.size()));
        let base_target = offset + rng.gen_range(0..base_n);
        builder.edges.push((start + local_anchor, base_target));
    }
}

/// Preferential attachment: `m` initial isolated nodes, then each new node
/// attaches to `m` distinct existing nodes sampled by degree.
fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    assert!(n > m && m >= 1, "need n > m >= 1");
    let mut edges = Vec::with_capacity(m * (n - m));
    // Every node appears once per incident edge; uniform draws from this
    // list are degree-proportional draws.
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    for v in m..n {
        let targets: Vec<usize> = if repeated.is_empty() {
            (0..m).collect()
        } else {
            let mut picked = BTreeSet::new();
            while picked.len() < m {
                picked.insert(repeated[rng.gen_range(0..repeated.len())]);
            }
            picked.into_iter().collect()
        };
        for &t in &targets {
            edges.push((t, v));
            repeated.push(t);
            repeated.push(v);
        }
    }
    edges
}

/// Balanced binary tree over `n` nodes with heap indexing.
fn balanced_binary_tree(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n {
        for child in [2 * i + 1, 2 * i + 2] {
            if child < n {
                edges.push((i, child));
            }
        }
    }
    edges
}

/// One-hot degree features; the bucket count is the maximum degree + 1.
fn one_hot_degree_features(graph: &Graph) -> FeatureMatrix {
    let cap = graph.max_degree();
    let d = cap + 1;
    let mut x = Array2::<f64>::zeros((graph.n(), d));
    for u in 0..graph.n() {
        x[[u, graph.degree(u).min(cap)]] = 1.0;
    }
    FeatureMatrix::new_unchecked(x)
}

/// Disjoint 80/10/10 masks from a seeded shuffle.
fn random_splits(n: usize, rng: &mut ChaCha8Rng) -> Splits {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = ((n as f64) * 0.8).round() as usize;
    let n_val = ((n as f64) * 0.1).round() as usize;
    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    for (rank, &u) in order.iter().enumerate() {
        if rank < n_train {
            train[u] = true;
        } else if rank < n_train + n_val {
            val[u] = true;
        } else {
            test[u] = true;
        }
    }
    Splits { train, val, test }
}
