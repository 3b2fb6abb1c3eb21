//! Undirected graphs, the self-loop-normalized adjacency operator and its
//! sparse powers.
//!
//! Types here are immutable after construction and shared read-only by the
//! rest of the pipeline. The powered operator is materialized once per
//! dataset; its row supports are exactly the L-hop neighborhoods, which the
//! explainers use as candidate sets.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1, ArrayView2};
use std::collections::VecDeque;

/// Immutable undirected graph with CSR neighbor lists.
///
/// Invariants: no self-loops, no duplicate edges, all endpoints below `n`,
/// neighbor lists sorted and symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Build from an edge list. Pairs are normalized to `(min, max)`;
    /// self-loops, duplicates and out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut norm: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has endpoint >= n = {n}"
                )));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        if let Some(w) = norm.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let mut degrees = vec![0usize; n];
        for &(a, b) in &norm {
            degrees[a] += 1;
            degrees[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        for u in 0..n {
            offsets.push(offsets[u] + degrees[u]);
        }
        let mut cursor = offsets.clone();
        let mut neighbors = vec![0usize; 2 * norm.len()];
        for &(a, b) in &norm {
            neighbors[cursor[a]] = b;
            cursor[a] += 1;
            neighbors[cursor[b]] = a;
            cursor[b] += 1;
        }
        for u in 0..n {
            neighbors[offsets[u]..offsets[u + 1]].sort_unstable();
        }

        Ok(Graph {
            n,
            edges: norm,
            offsets,
            neighbors,
            degrees,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(min, max)` pairs, sorted, each once.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.degrees[u]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }
}

/// Node feature matrix, one row per node. Entries are finite and `d >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidData("feature dimension must be >= 1".into()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature entry".into()));
        }
        Ok(FeatureMatrix(data))
    }

    /// For internal construction where finiteness is structurally guaranteed.
    pub(crate) fn new_unchecked(data: Array2<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        FeatureMatrix(data)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }
}

/// Sparse square matrix stored by rows, indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.offsets[i]..self.offsets[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(pos) => val[pos],
            Err(_) => 0.0,
        }
    }

    /// Sparse-sparse product, exact per-entry dot sums.
    pub fn matmul(&self, rhs: &SparseRows) -> SparseRows {
        assert_eq!(self.n, rhs.n, "dimension mismatch in sparse product");
        let n = self.n;
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        let mut indices: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut acc = vec![0.0f64; n];
        let mut mark = vec![usize::MAX; n];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..n {
            touched.clear();
            let (ks, avs) = self.row(i);
            for (&k, &a) in ks.iter().zip(avs) {
                let (js, bvs) = rhs.row(k);
                for (&j, &b) in js.iter().zip(bvs) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                indices.push(j);
                values.push(acc[j]);
            }
            offsets.push(indices.len());
        }
        SparseRows {
            n,
            offsets,
            indices,
            values,
        }
    }

    /// Sparse times dense.
    pub fn mul_dense(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.n, x.nrows(), "dimension mismatch in sparse-dense product");
        let d = x.ncols();
        let mut out = Array2::<f64>::zeros((self.n, d));
        for i in 0..self.n {
            let (js, vs) = self.row(i);
            let mut out_row = out.row_mut(i);
            for (&j, &v) in js.iter().zip(vs) {
                out_row.scaled_add(v, &x.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.n, self.n));
        for i in 0..self.n {
            let (js, vs) = self.row(i);
            for (&j, &v) in js.iter().zip(vs) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Largest |a_ij - a_ji| over stored entries.
    pub fn max_symmetry_gap(&self) -> f64 {
        let mut gap = 0.0f64;
        for i in 0..self.n {
            let (js, vs) = self.row(i);
            for (&j, &v) in js.iter().zip(vs) {
                gap = gap.max((v - self.get(j, i)).abs());
            }
        }
        gap
    }
}

/// A power of the degree-normalized adjacency with self-loops.
///
/// Row `u` of the power-L operator is supported exactly on the L-hop
/// neighborhood of `u` (including `u`), with values in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    power: usize,
    rows: SparseRows,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.rows.n()
    }

    pub fn power(&self) -> usize {
        self.power
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    /// Column indices and values of row `u`.
    pub fn row(&self, u: usize) -> (&[usize], &[f64]) {
        self.rows.row(u)
    }

    /// Support of row `u`: the nodes within `power` hops of `u`, sorted.
    pub fn support(&self, u: usize) -> &[usize] {
        self.rows.row(u).0
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows.get(i, j)
    }

    /// Propagate features: the dense matrix `A^L X`.
    pub fn mul_features(&self, x: &FeatureMatrix) -> Array2<f64> {
        self.rows.mul_dense(x.view())
    }

    /// Row `u` of `A^L X` without materializing the full product.
    pub fn propagate_row(&self, u: usize, x: ArrayView2<f64>) -> ndarray::Array1<f64> {
        let (js, vs) = self.rows.row(u);
        let mut out = ndarray::Array1::<f64>::zeros(x.ncols());
        for (&j, &v) in js.iter().zip(vs) {
            out.scaled_add(v, &x.row(j));
        }
        out
    }
}

/// Build `(D + I)^{-1/2} (A + I) (D + I)^{-1/2}` for the given graph.
pub fn build_normalized_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.n();
    let inv_sqrt: Vec<f64> = (0..n).map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt()).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    let mut indices: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for u in 0..n {
        // Merge u into its sorted neighbor list to place the self-loop.
        let neigh = g.neighbors(u);
        let pos = neigh.partition_point(|&j| j < u);
        for &j in &neigh[..pos] {
            indices.push(j);
            values.push(inv_sqrt[u] * inv_sqrt[j]);
        }
        indices.push(u);
        values.push(inv_sqrt[u] * inv_sqrt[u]);
        for &j in &neigh[pos..] {
            indices.push(j);
            values.push(inv_sqrt[u] * inv_sqrt[j]);
        }
        offsets.push(indices.len());
    }
    NormalizedAdjacency {
        power: 1,
        rows: SparseRows {
            n,
            offsets,
            indices,
            values,
        },
    }
}

/// Raise the operator to the `exponent`-th power by repeated sparse
/// products. The result's power is `adj.power() * exponent`.
pub fn power(adj: &NormalizedAdjacency, exponent: usize) -> Result<NormalizedAdjacency> {
    if exponent == 0 {
        return Err(Error::InvalidData("power exponent must be >= 1".into()));
    }
    let mut rows = adj.rows.clone();
    for _ in 1..exponent {
        rows = rows.matmul(&adj.rows);
    }
    Ok(NormalizedAdjacency {
        power: adj.power * exponent,
        rows,
    })
}

/// Nodes at hop distance <= `l` from `u`, including `u`, sorted ascending.
pub fn l_hop_neighborhood(g: &Graph, u: usize, l: usize) -> Vec<usize> {
    assert!(u < g.n(), "node {u} out of range");
    let mut dist = vec![usize::MAX; g.n()];
    dist[u] = 0;
    let mut queue = VecDeque::from([u]);
    let mut out = vec![u];
    while let Some(v) = queue.pop_front() {
        if dist[v] == l {
            continue;
        }
        for &w in g.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                out.push(w);
                queue.push_back(w);
            }
        }
    }
    out.sort_unstable();
    out
}
