//! Pairwise-penalty graphs over latent vectors.
//!
//! Edges are stored once with `a < b`. The implied incidence matrix `E` has one
//! column per edge with `+1` at `a` and `-1` at `b`, so `X^T E` collects the
//! edgewise differences `x_a - x_b`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, sqrt, Matrix};
use crate::observed::ObservedMatrix;

/// Lower clamp on distances before inverting them into adaptive weights.
pub const DISTANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
    acyclic: bool,
}

impl PairGraph {
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            edges: Vec::new(),
            acyclic: true,
        }
    }

    /// Builds a graph from `(u, v, w)` triples; endpoints may come in either
    /// order. Self-loops, repeated pairs, out-of-range nodes and non-positive
    /// weights are rejected.
    pub fn new<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut out = Vec::new();
        for (u, v, w) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::Data(format!(
                    "edge ({u}, {v}) outside a graph of {n_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::Data(format!("self-loop at node {u}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Data(format!(
                    "edge ({u}, {v}) has weight {w}; weights must be positive"
                )));
            }
            out.push(Edge {
                a: u.min(v),
                b: u.max(v),
                weight: w,
            });
        }
        out.sort_by_key(|e| (e.a, e.b));
        if let Some(w) = out.windows(2).find(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(Error::Data(format!("duplicate edge ({}, {})", w[0].a, w[0].b)));
        }
        let mut g = Self {
            n_nodes,
            edges: out,
            acyclic: false,
        };
        g.acyclic = g.is_forest();
        Ok(g)
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_acyclic(&self) -> bool {
        self.acyclic
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.weight).reduce(f64::max)
    }

    /// Same topology with every weight set to one.
    pub fn unit_weights(&self) -> PairGraph {
        let mut g = self.clone();
        g.edges.iter_mut().for_each(|e| e.weight = 1.0);
        g
    }

    /// Whether the edge set contains no cycle (checked, not the cached flag).
    pub fn is_forest(&self) -> bool {
        let mut uf = UnionFind::new(self.n_nodes);
        self.edges.iter().all(|e| uf.union(e.a, e.b))
    }

    /// Number of connected components, isolated nodes included.
    pub fn n_components(&self) -> usize {
        let mut uf = UnionFind::new(self.n_nodes);
        let merges = self.edges.iter().filter(|e| uf.union(e.a, e.b)).count();
        self.n_nodes - merges
    }

    /// Structural nonzeros of `E E^T`: one diagonal entry per node with an
    /// incident edge plus two off-diagonal entries per edge.
    pub fn incidence_gram_nnz(&self) -> usize {
        let mut touched = vec![false; self.n_nodes];
        for e in &self.edges {
            touched[e.a] = true;
            touched[e.b] = true;
        }
        touched.iter().filter(|t| **t).count() + 2 * self.edges.len()
    }

    /// Node degrees.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_nodes];
        for e in &self.edges {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
        deg
    }

    /// Spanning forest obtained by a depth-first search that visits roots and
    /// neighbours in a seeded random order. Every edge that would close a
    /// cycle is cut; connectivity of each component is preserved.
    pub fn cut_cycles(&self, seed: u64) -> PairGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.n_nodes];
        for (k, e) in self.edges.iter().enumerate() {
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        for list in adjacency.iter_mut() {
            list.shuffle(&mut rng);
        }
        let mut roots: Vec<usize> = (0..self.n_nodes).collect();
        roots.shuffle(&mut rng);

        let mut visited = vec![false; self.n_nodes];
        let mut keep = vec![false; self.edges.len()];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for root in roots {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            stack.push((root, 0));
            while let Some(top) = stack.last_mut() {
                let (node, cursor) = *top;
                if cursor == adjacency[node].len() {
                    stack.pop();
                    continue;
                }
                top.1 += 1;
                let (next, edge) = adjacency[node][cursor];
                if !visited[next] {
                    visited[next] = true;
                    keep[edge] = true;
                    stack.push((next, 0));
                }
            }
        }
        let edges = self
            .edges
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(e, _)| *e)
            .collect();
        PairGraph {
            n_nodes: self.n_nodes,
            edges,
            acyclic: true,
        }
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Source of pairwise dissimilarities; `None` means "no evidence".
pub trait PairDistance {
    fn n_nodes(&self) -> usize;
    fn distance(&self, i: usize, j: usize) -> Option<f64>;
}

/// Root mean squared difference over the columns both rows observe; `None`
/// when the supports are disjoint.
pub fn distance_d1(m: &ObservedMatrix, i: usize, j: usize) -> Option<f64> {
    let (ci, vi) = m.row(i);
    let (cj, vj) = m.row(j);
    let (mut p, mut q) = (0, 0);
    let (mut sum, mut count) = (0.0, 0usize);
    while p < ci.len() && q < cj.len() {
        match ci[p].cmp(&cj[q]) {
            core::cmp::Ordering::Less => p += 1,
            core::cmp::Ordering::Greater => q += 1,
            core::cmp::Ordering::Equal => {
                let d = vi[p] - vj[q];
                sum += d * d;
                count += 1;
                p += 1;
                q += 1;
            }
        }
    }
    (count > 0).then(|| sqrt(sum / count as f64))
}

/// Root mean squared difference over the union of supports, where a row's
/// missing value at a column the other row observes is imputed by that
/// column's observed mean. `col_means` comes from
/// [`ObservedMatrix::column_means`].
pub fn distance_d2(m: &ObservedMatrix, col_means: &[Option<f64>], i: usize, j: usize) -> Result<f64> {
    let (ci, vi) = m.row(i);
    let (cj, vj) = m.row(j);
    if ci.is_empty() && cj.is_empty() {
        return Err(Error::Data(format!("both rows unobserved ({i}, {j})")));
    }
    let mean = |t: usize| col_means[t].expect("observed column has a mean");
    let (mut p, mut q) = (0, 0);
    let (mut sum, mut count) = (0.0, 0usize);
    let mut add = |d: f64| {
        sum += d * d;
        count += 1;
    };
    while p < ci.len() || q < cj.len() {
        let next_i = ci.get(p).copied().unwrap_or(usize::MAX);
        let next_j = cj.get(q).copied().unwrap_or(usize::MAX);
        if next_i == next_j {
            add(vi[p] - vj[q]);
            p += 1;
            q += 1;
        } else if next_i < next_j {
            add(vi[p] - mean(next_i));
            p += 1;
        } else {
            add(mean(next_j) - vj[q]);
            q += 1;
        }
    }
    Ok(sqrt(sum / count as f64))
}

/// Row distances of an observed matrix by the overlap rule.
pub struct OverlapDistance<'a> {
    m: &'a ObservedMatrix,
}

impl<'a> OverlapDistance<'a> {
    pub fn new(m: &'a ObservedMatrix) -> Self {
        Self { m }
    }
}

impl PairDistance for OverlapDistance<'_> {
    fn n_nodes(&self) -> usize {
        self.m.n_rows()
    }

    fn distance(&self, i: usize, j: usize) -> Option<f64> {
        distance_d1(self.m, i, j)
    }
}

/// Row distances of an observed matrix by the mean-imputation rule.
pub struct ImputedDistance<'a> {
    m: &'a ObservedMatrix,
    col_means: Vec<Option<f64>>,
}

impl<'a> ImputedDistance<'a> {
    pub fn new(m: &'a ObservedMatrix) -> Self {
        Self {
            m,
            col_means: m.column_means(),
        }
    }
}

impl PairDistance for ImputedDistance<'_> {
    fn n_nodes(&self) -> usize {
        self.m.n_rows()
    }

    fn distance(&self, i: usize, j: usize) -> Option<f64> {
        distance_d2(self.m, &self.col_means, i, j).ok()
    }
}

/// Euclidean distances between rows of a latent factor matrix.
pub struct LatentDistance<'a> {
    rows: &'a Matrix,
}

impl<'a> LatentDistance<'a> {
    pub fn new(rows: &'a Matrix) -> Self {
        Self { rows }
    }
}

impl PairDistance for LatentDistance<'_> {
    fn n_nodes(&self) -> usize {
        self.rows.rows()
    }

    fn distance(&self, i: usize, j: usize) -> Option<f64> {
        Some(sqrt(dist_sq(self.rows.row(i), self.rows.row(j))))
    }
}

/// Precomputed symmetric distance table; `NaN` marks an absent distance.
#[derive(Clone, Debug)]
pub struct DistanceTable {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceTable {
    #[inline]
    fn slot(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Number of stored pairs for `n` nodes.
    pub fn n_pairs(n: usize) -> usize {
        n * n.saturating_sub(1) / 2
    }

    /// Row-major strict upper triangle, as produced by [`pairs`](Self::pairs).
    pub fn from_upper_triangle(n: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != Self::n_pairs(n) {
            return Err(Error::Dimension(format!(
                "{} distances for {n} nodes (expected {})",
                upper.len(),
                Self::n_pairs(n)
            )));
        }
        Ok(Self { n, upper })
    }

    /// The `(i, j)` pairs with `i < j` in storage order.
    pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    pub fn compute(source: &impl PairDistance) -> Self {
        let n = source.n_nodes();
        let upper = Self::pairs(n)
            .map(|(i, j)| source.distance(i, j).unwrap_or(f64::NAN))
            .collect();
        Self { n, upper }
    }
}

impl PairDistance for DistanceTable {
    fn n_nodes(&self) -> usize {
        self.n
    }

    fn distance(&self, i: usize, j: usize) -> Option<f64> {
        let d = self.upper[Self::slot(self.n, i, j)];
        (!d.is_nan()).then_some(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Weighting {
    /// `w = 1 / max(d, DISTANCE_FLOOR)`.
    Adaptive,
    /// `w = 1`.
    Unit,
}

impl core::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adaptive" => Ok(Weighting::Adaptive),
            "unit" => Ok(Weighting::Unit),
            other => Err(Error::Argument(format!("unknown weighting '{other}'"))),
        }
    }
}

/// Indices of the `k` nearest nodes to `i` (absent distances excluded,
/// ties broken by index), with their distances.
pub fn nearest_neighbors(dist: &impl PairDistance, i: usize, k: usize) -> Vec<(usize, f64)> {
    let n = dist.n_nodes();
    let mut cand: Vec<(usize, f64)> = (0..n)
        .filter(|&j| j != i)
        .filter_map(|j| dist.distance(i, j).map(|d| (j, d)))
        .collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if cand.len() > k {
        cand.select_nth_unstable_by(k, order);
        cand.truncate(k);
    }
    cand.sort_by(order);
    cand
}

/// k-nearest-neighbour graph: each node proposes edges to its `k` nearest
/// nodes; the two directed proposals of a pair merge into one edge keeping
/// the larger weight.
pub fn build_knn_graph(dist: &impl PairDistance, k: usize, weighting: Weighting) -> Result<PairGraph> {
    let n = dist.n_nodes();
    if n < 2 {
        return Err(Error::Argument(format!(
            "a neighbour graph needs at least 2 nodes, got {n}"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Argument(format!(
            "k = {k} must satisfy 1 <= k < {n} (number of nodes)"
        )));
    }
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for (j, d) in nearest_neighbors(dist, i, k) {
            let w = match weighting {
                Weighting::Unit => 1.0,
                Weighting::Adaptive => 1.0 / d.max(DISTANCE_FLOOR),
            };
            let slot = merged.entry((i.min(j), i.max(j))).or_insert(w);
            *slot = slot.max(w);
        }
    }
    PairGraph::new(n, merged.into_iter().map(|((a, b), w)| (a, b, w)))
}

/// Second-pass adaptive graph from the Euclidean distances between the
/// latent rows of a first solve.
pub fn refine_weights(latent: &Matrix, n_nodes: usize, k: usize) -> Result<PairGraph> {
    if latent.rows() != n_nodes {
        return Err(Error::Dimension(format!(
            "latent matrix has {} rows for a graph of {n_nodes} nodes",
            latent.rows()
        )));
    }
    build_knn_graph(&LatentDistance::new(latent), k, Weighting::Adaptive)
}
