//! Independent reference implementations used by the test suites.
//!
//! Nothing here calls into the solver internals being checked; each oracle is
//! written from the defining formula with dense linear algebra or brute force.
#![allow(dead_code)]

use std::collections::BTreeSet;

use llfmc_core::graph::PairDistance;
use llfmc_core::{Entry, Matrix, ObservedMatrix, PairGraph, PenaltySpec, RunConfig, SolverState};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 1-D objective `1/2 (s - r)^2 + lambda p(s)`.
pub fn prox_objective(spec: &PenaltySpec, r: f64, lambda: f64, s: f64) -> f64 {
    0.5 * (s - r) * (s - r) + lambda * spec.eval(s).unwrap()
}

/// Minimizer of the 1-D prox objective over `s >= 0` found by a uniform grid
/// followed by golden-section refinement around the best grid point.
pub fn prox_1d_oracle(spec: &PenaltySpec, r: f64, lambda: f64) -> f64 {
    let hi = r.max(2.0 * spec.b).max(spec.a * spec.gamma).max(spec.gamma * spec.t) + 1.0;
    let steps = 20_000usize;
    let h = hi / steps as f64;
    let f = |s: f64| prox_objective(spec, r, lambda, s);
    let mut best = 0usize;
    let mut best_f = f(0.0);
    for i in 1..=steps {
        let v = f(i as f64 * h);
        if v < best_f {
            best_f = v;
            best = i;
        }
    }
    let mut lo = (best as f64 - 1.0).max(0.0) * h;
    let mut up = (best as f64 + 1.0) * h;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = up - g * (up - lo);
    let mut d = lo + g * (up - lo);
    for _ in 0..200 {
        if f(c) <= f(d) {
            up = d;
        } else {
            lo = c;
        }
        c = up - g * (up - lo);
        d = lo + g * (up - lo);
    }
    let s = 0.5 * (lo + up);
    // the refined point can only improve on the endpoints of the bracket
    [s, 0.0].into_iter().min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
}

pub fn random_observed(rng: &mut ChaCha8Rng, n: usize, m: usize, density: f64) -> ObservedMatrix {
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.random::<f64>() < density {
                entries.push(Entry::new(i, j, rng.random_range(-3.0..3.0)));
            }
        }
    }
    ObservedMatrix::new(n, m, entries).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Random simple graph with up to `n_edges` distinct edges and weights in (0.5, 2).
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, n_edges: usize) -> PairGraph {
    let mut seen = BTreeSet::new();
    if n >= 2 {
        for _ in 0..n_edges * 4 {
            if seen.len() == n_edges {
                break;
            }
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                seen.insert((a.min(b), a.max(b)));
            }
        }
    }
    let edges: Vec<_> = seen
        .into_iter()
        .map(|(a, b)| (a, b, rng.random_range(0.5..2.0)))
        .collect();
    PairGraph::new(n, edges).unwrap()
}

/// Dense incidence matrix: column `l` is `e_a - e_b`.
pub fn dense_incidence(g: &PairGraph) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(g.n_nodes(), g.n_edges());
    for (l, edge) in g.edges().iter().enumerate() {
        e[(edge.a, l)] = 1.0;
        e[(edge.b, l)] = -1.0;
    }
    e
}

pub fn to_dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

/// `[G + (eta E E^T + (alpha + 1) I_n) kron I_d]` with block `i` of the
/// unknown holding latent vector `i`; `G_i = sum_{j in Omega_i} y_j y_j^T`.
pub fn dense_x_system(m: &ObservedMatrix, y: &Matrix, g: &PairGraph, eta: f64, alpha: f64) -> DMatrix<f64> {
    let (n, d) = (m.n_rows(), y.cols());
    let e = dense_incidence(g);
    let lap = &e * e.transpose() * eta + DMatrix::identity(n, n) * (alpha + 1.0);
    let mut a = lap.kronecker(&DMatrix::<f64>::identity(d, d));
    for entry in m.entries() {
        let yj = y.row(entry.col);
        for k in 0..d {
            for l in 0..d {
                a[(entry.row * d + k, entry.row * d + l)] += yj[k] * yj[l];
            }
        }
    }
    a
}

/// `c` of the X-system from its definition: `b_i + x_i^k + [eta P E^T + Lambda E^T]_i`.
pub fn dense_x_rhs(state: &SolverState, m: &ObservedMatrix, g: &PairGraph, eta: f64) -> DVector<f64> {
    let d = state.x.cols();
    let e = dense_incidence(g);
    // P and Lambda as d x |edges|
    let p = to_dense(&state.p).transpose();
    let lam = to_dense(&state.lambda).transpose();
    let coupling = (p * eta + lam) * e.transpose(); // d x n
    let mut c = DVector::zeros(m.n_rows() * d);
    for i in 0..m.n_rows() {
        for k in 0..d {
            c[i * d + k] = state.x.get(i, k) + coupling[(k, i)];
        }
    }
    for entry in m.entries() {
        for k in 0..d {
            c[entry.row * d + k] += entry.value * state.y.get(entry.col, k);
        }
    }
    c
}

pub fn matrix_rank(a: &DMatrix<f64>) -> usize {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0;
    }
    a.clone().svd(false, false).rank(1e-9)
}

/// Largest residual norm of the per-row ridge systems
/// `(sum_{j in Omega_i} y_j y_j^T + alpha I) x_i = sum_j M_ij y_j` over both sides.
pub fn ridge_stationarity(m: &ObservedMatrix, x: &Matrix, y: &Matrix, alpha: f64) -> f64 {
    let side = |obs: &ObservedMatrix, own: &Matrix, partner: &Matrix| -> f64 {
        let d = own.cols();
        let mut worst: f64 = 0.0;
        for i in 0..obs.n_rows() {
            let (idx, vals) = obs.row(i);
            let mut g = DMatrix::<f64>::identity(d, d) * alpha;
            let mut b = DVector::<f64>::zeros(d);
            for (&j, &v) in idx.iter().zip(vals) {
                let yj = DVector::from_row_slice(partner.row(j));
                g += &yj * yj.transpose();
                b += yj * v;
            }
            let xi = DVector::from_row_slice(own.row(i));
            worst = worst.max((g * xi - b).norm());
        }
        worst
    };
    side(m, x, y).max(side(&m.transpose(), y, x))
}

/// Augmented Lagrangian written out term by term with dense matrices
/// in the `d x |edges|` orientation.
pub fn lagrangian_oracle(
    state: &SolverState,
    m: &ObservedMatrix,
    gx: &PairGraph,
    gy: &PairGraph,
    config: &RunConfig,
) -> f64 {
    let x = to_dense(&state.x);
    let y = to_dense(&state.y);
    let fitted = &x * y.transpose();
    let mut data = 0.0;
    for e in m.entries() {
        let r = e.value - fitted[(e.row, e.col)];
        data += r * r;
    }
    let ridge = 0.5 * config.alpha * (x.norm_squared() + y.norm_squared());
    let side = |own: &DMatrix<f64>, g: &PairGraph, p: &Matrix, dual: &Matrix, pen: &PenaltySpec| {
        let e = dense_incidence(g);
        let p = to_dense(p).transpose();
        let dual = to_dense(dual).transpose();
        let resid = &p - own.transpose() * e;
        let trace = (dual.transpose() * &resid).trace();
        let quad = 0.5 * config.eta * resid.norm_squared();
        let pen_sum: f64 = g
            .edges()
            .iter()
            .enumerate()
            .map(|(l, edge)| edge.weight * pen.eval(p.column(l).norm()).unwrap())
            .sum();
        trace + quad + pen_sum
    };
    0.5 * data
        + ridge
        + side(&x, gx, &state.p, &state.lambda, &config.penalty_x)
        + side(&y, gy, &state.q, &state.v, &config.penalty_y)
}

/// Brute-force k-NN edge set: `(i, j)` with `i < j` such that one is among
/// the other's `k` closest by (distance, index), absent distances skipped.
pub fn knn_pairs_brute(dist: &impl PairDistance, k: usize) -> BTreeSet<(usize, usize)> {
    let n = dist.n_nodes();
    let mut out = BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .filter_map(|j| dist.distance(i, j).map(|d| (d, j)))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            out.insert((i.min(j), i.max(j)));
        }
    }
    out
}

/// Connected components as a sorted list of sorted node sets, via BFS.
pub fn components(g: &PairGraph) -> Vec<Vec<usize>> {
    let n = g.n_nodes();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out.sort();
    out
}

/// Random unit-norm rotation via QR of a Gaussian-ish matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}
