//! The individual steps of one outer iteration.
//!
//! X-side and Y-side steps share one implementation parameterised by the
//! observations seen from that side: rows of `M` (with partner `Y`) for the
//! X-update, columns of `M` (with partner `X`) for the Y-update.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::SolverState;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::PairGraph;
use crate::linalg::{axpy, dot, norm, norm_sq, Matrix};
use crate::observed::{ObservedMatrix, SparseLines};
use crate::penalty::PenaltySpec;

/// Edgewise proximal step: row `l` of the result is
/// `prox_{(w_l / eta) p}(x_a - x_b - duals_l / eta)`.
pub fn prox_edges(own: &Matrix, graph: &PairGraph, duals: &Matrix, penalty: &PenaltySpec, eta: f64) -> Result<Matrix> {
    let d = own.cols();
    let mut out = Matrix::zeros(graph.n_edges(), d);
    let mut target = vec![0.0; d];
    for (l, e) in graph.edges().iter().enumerate() {
        let lambda = e.weight / eta;
        if !penalty.prox_admissible(lambda) {
            return Err(Error::Config(format!(
                "edge ({}, {}) with weight {} needs eta > {} for {} (got eta = {eta})",
                e.a,
                e.b,
                e.weight,
                2.0 * penalty.strong_convexity() * e.weight,
                penalty.kind
            )));
        }
        let (xa, xb, dual) = (own.row(e.a), own.row(e.b), duals.row(l));
        for c in 0..d {
            target[c] = xa[c] - xb[c] - dual[c] / eta;
        }
        penalty.group_prox_unchecked(&target, lambda, out.row_mut(l));
    }
    Ok(out)
}

/// New `P` from `X^k` and `Lambda^k`.
pub fn update_p(state: &SolverState, graph_x: &PairGraph, penalty_x: &PenaltySpec, eta: f64) -> Result<Matrix> {
    prox_edges(&state.x, graph_x, &state.lambda, penalty_x, eta)
}

/// New `Q` from `Y^k` and `V^k`.
pub fn update_q(state: &SolverState, graph_y: &PairGraph, penalty_y: &PenaltySpec, eta: f64) -> Result<Matrix> {
    prox_edges(&state.y, graph_y, &state.v, penalty_y, eta)
}

/// Right-hand side `c` of the Bregman-augmented normal equations. Block `i`
/// is `b_i + x_i^k + sum_l E_il (eta p_l + duals_l)` with
/// `b_i = sum_{j in Omega_i} M_ij y_j`.
pub fn assemble_rhs(
    obs: &SparseLines,
    partner: &Matrix,
    own_prev: &Matrix,
    graph: &PairGraph,
    edge_vars: &Matrix,
    duals: &Matrix,
    eta: f64,
) -> Vec<f64> {
    let d = own_prev.cols();
    let mut c = own_prev.as_slice().to_vec();
    for i in 0..obs.n_lines() {
        let (idx, vals) = obs.line(i);
        let block = &mut c[i * d..(i + 1) * d];
        for (&j, &mij) in idx.iter().zip(vals) {
            axpy(mij, partner.row(j), block);
        }
    }
    for (l, e) in graph.edges().iter().enumerate() {
        let (p, dual) = (edge_vars.row(l), duals.row(l));
        for k in 0..d {
            let flow = eta * p[k] + dual[k];
            c[e.a * d + k] += flow;
            c[e.b * d + k] -= flow;
        }
    }
    c
}

pub fn assemble_rhs_x(state: &SolverState, m: &ObservedMatrix, graph_x: &PairGraph, eta: f64) -> Vec<f64> {
    assemble_rhs(m.rows(), &state.y, &state.x, graph_x, &state.p, &state.lambda, eta)
}

pub fn assemble_rhs_y(state: &SolverState, m: &ObservedMatrix, graph_y: &PairGraph, eta: f64) -> Vec<f64> {
    assemble_rhs(m.cols(), &state.x, &state.y, graph_y, &state.q, &state.v, eta)
}

/// Symmetric positive definite linear map used by [`conjugate_gradient`].
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, s: &[f64], out: &mut [f64]);
}

/// `s -> G s + vec(eta S E E^T + (alpha + 1) S)`, the Hessian of one
/// factor subproblem. The Gram block `G_i = sum_{j in Omega_i} y_j^T y_j` is
/// never formed: `G_i s_i = sum_j (y_j . s_i) y_j`.
pub struct SubproblemOperator<'a> {
    pub obs: &'a SparseLines,
    pub partner: &'a Matrix,
    pub graph: &'a PairGraph,
    pub eta: f64,
    pub alpha: f64,
}

impl LinearOperator for SubproblemOperator<'_> {
    fn dim(&self) -> usize {
        self.obs.n_lines() * self.partner.cols()
    }

    fn apply(&self, s: &[f64], out: &mut [f64]) {
        let d = self.partner.cols();
        let diag = self.alpha + 1.0;
        for i in 0..self.obs.n_lines() {
            let si = &s[i * d..(i + 1) * d];
            let oi = &mut out[i * d..(i + 1) * d];
            for (o, v) in oi.iter_mut().zip(si) {
                *o = diag * v;
            }
            let (idx, _) = self.obs.line(i);
            for &j in idx {
                let yj = self.partner.row(j);
                axpy(dot(yj, si), yj, oi);
            }
        }
        for e in self.graph.edges() {
            for k in 0..d {
                let diff = self.eta * (s[e.a * d + k] - s[e.b * d + k]);
                out[e.a * d + k] += diff;
                out[e.b * d + k] -= diff;
            }
        }
    }
}

/// Hessian-vector product of the X-subproblem for partner factor `y`.
pub fn hessian_vec_x(s: &[f64], m: &ObservedMatrix, y: &Matrix, graph_x: &PairGraph, eta: f64, alpha: f64) -> Vec<f64> {
    let op = SubproblemOperator {
        obs: m.rows(),
        partner: y,
        graph: graph_x,
        eta,
        alpha,
    };
    let mut out = vec![0.0; s.len()];
    op.apply(s, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CgReport {
    pub iterations: usize,
    /// `||A x - c||_2` at exit.
    pub residual: f64,
}

/// Conjugate gradient from the warm start in `x`. The residual test is applied
/// to the output of each step, so at least one step is taken unless the warm
/// start is already exact; stops when the residual norm is at most `threshold`
/// or after `max_iter` steps. Returns `None` if the residual stops being finite.
pub fn conjugate_gradient(
    op: &impl LinearOperator,
    rhs: &[f64],
    x: &mut [f64],
    threshold: f64,
    max_iter: usize,
) -> Option<CgReport> {
    let n = op.dim();
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, ci) in r.iter_mut().zip(rhs) {
        *ri = ci - *ri;
    }
    let mut rr = norm_sq(&r);
    let mut iterations = 0;
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    while iterations < max_iter && rr > 0.0 && (iterations == 0 || libm::sqrt(rr) > threshold) {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let step = rr / pap;
        axpy(step, &p, x);
        axpy(-step, &ap, &mut r);
        let rr_next = norm_sq(&r);
        iterations += 1;
        let beta = rr_next / rr;
        rr = rr_next;
        if rr == 0.0 {
            break;
        }
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    let residual = libm::sqrt(rr);
    residual.is_finite().then_some(CgReport { iterations, residual })
}

/// Inexact solve of one factor subproblem, warm-started at `own_prev`.
#[allow(clippy::too_many_arguments)]
pub fn solve_factor(
    obs: &SparseLines,
    partner: &Matrix,
    own_prev: &Matrix,
    graph: &PairGraph,
    edge_vars: &Matrix,
    duals: &Matrix,
    eta: f64,
    alpha: f64,
    threshold: f64,
    max_iter: usize,
) -> Option<(Matrix, CgReport)> {
    let rhs = assemble_rhs(obs, partner, own_prev, graph, edge_vars, duals, eta);
    let op = SubproblemOperator {
        obs,
        partner,
        graph,
        eta,
        alpha,
    };
    let mut next = own_prev.clone();
    let report = conjugate_gradient(&op, &rhs, next.as_mut_slice(), threshold, max_iter)?;
    Some((next, report))
}

/// X-update at outer iteration `k` (requires `P` already updated).
pub fn cg_solve_x(
    state: &SolverState,
    m: &ObservedMatrix,
    graph_x: &PairGraph,
    config: &RunConfig,
    k: usize,
) -> Result<(Matrix, CgReport)> {
    solve_factor(
        m.rows(),
        &state.y,
        &state.x,
        graph_x,
        &state.p,
        &state.lambda,
        config.eta,
        config.alpha,
        config.cg_threshold(k, m.n_rows()),
        config.cg_max_inner,
    )
    .ok_or(Error::Divergence {
        iteration: k,
        quantity: "X-subproblem CG residual",
        value: f64::NAN,
    })
}

/// Y-update at outer iteration `k` (uses the already updated `X`).
pub fn cg_solve_y(
    state: &SolverState,
    m: &ObservedMatrix,
    graph_y: &PairGraph,
    config: &RunConfig,
    k: usize,
) -> Result<(Matrix, CgReport)> {
    solve_factor(
        m.cols(),
        &state.x,
        &state.y,
        graph_y,
        &state.q,
        &state.v,
        config.eta,
        config.alpha,
        config.cg_threshold(k, m.n_cols()),
        config.cg_max_inner,
    )
    .ok_or(Error::Divergence {
        iteration: k,
        quantity: "Y-subproblem CG residual",
        value: f64::NAN,
    })
}

/// `duals += eta (edge_vars - own^T E)`, in place.
pub fn ascend_duals(duals: &mut Matrix, edge_vars: &Matrix, own: &Matrix, graph: &PairGraph, eta: f64) {
    for (l, e) in graph.edges().iter().enumerate() {
        let (xa, xb) = (own.row(e.a), own.row(e.b));
        let p = edge_vars.row(l);
        for (k, dual) in duals.row_mut(l).iter_mut().enumerate() {
            *dual += eta * (p[k] - (xa[k] - xb[k]));
        }
    }
}

/// Dual ascent on both multipliers.
pub fn dual_update(state: &mut SolverState, graph_x: &PairGraph, graph_y: &PairGraph, eta: f64) {
    ascend_duals(&mut state.lambda, &state.p, &state.x, graph_x, eta);
    ascend_duals(&mut state.v, &state.q, &state.y, graph_y, eta);
}

/// `||edge_vars - own^T E||_F`.
pub fn constraint_residual(own: &Matrix, graph: &PairGraph, edge_vars: &Matrix) -> f64 {
    let mut sum = 0.0;
    for (l, e) in graph.edges().iter().enumerate() {
        let (xa, xb, p) = (own.row(e.a), own.row(e.b), edge_vars.row(l));
        for k in 0..p.len() {
            let r = p[k] - (xa[k] - xb[k]);
            sum += r * r;
        }
    }
    libm::sqrt(sum)
}

fn side_coupling(
    own: &Matrix,
    graph: &PairGraph,
    edge_vars: &Matrix,
    duals: &Matrix,
    penalty: &PenaltySpec,
    eta: f64,
) -> f64 {
    let mut total = 0.0;
    let mut r = vec![0.0; own.cols()];
    for (l, e) in graph.edges().iter().enumerate() {
        let (xa, xb, p) = (own.row(e.a), own.row(e.b), edge_vars.row(l));
        for k in 0..r.len() {
            r[k] = p[k] - (xa[k] - xb[k]);
        }
        total += dot(duals.row(l), &r) + 0.5 * eta * norm_sq(&r) + e.weight * penalty.value(norm(p));
    }
    total
}

/// The augmented Lagrangian `L_eta(P, Q, X, Y, Lambda, V)`.
pub fn augmented_lagrangian(
    state: &SolverState,
    m: &ObservedMatrix,
    graph_x: &PairGraph,
    graph_y: &PairGraph,
    config: &RunConfig,
) -> f64 {
    let data: f64 = m
        .entries()
        .iter()
        .map(|e| {
            let r = e.value - dot(state.x.row(e.row), state.y.row(e.col));
            r * r
        })
        .sum();
    let ridge = 0.5 * config.alpha * (norm_sq(state.x.as_slice()) + norm_sq(state.y.as_slice()));
    0.5 * data
        + ridge
        + side_coupling(
            &state.x,
            graph_x,
            &state.p,
            &state.lambda,
            &config.penalty_x,
            config.eta,
        )
        + side_coupling(&state.y, graph_y, &state.q, &state.v, &config.penalty_y, config.eta)
}

/// The unconstrained objective at factors `x`, `y`:
/// data fit, ridge, and both weighted pairwise penalty sums.
pub fn objective(
    x: &Matrix,
    y: &Matrix,
    m: &ObservedMatrix,
    graph_x: &PairGraph,
    graph_y: &PairGraph,
    config: &RunConfig,
) -> f64 {
    let data: f64 = m
        .entries()
        .iter()
        .map(|e| {
            let r = e.value - dot(x.row(e.row), y.row(e.col));
            r * r
        })
        .sum();
    let pairwise = |f: &Matrix, g: &PairGraph, pen: &PenaltySpec| -> f64 {
        g.edges()
            .iter()
            .map(|e| e.weight * pen.value(libm::sqrt(crate::linalg::dist_sq(f.row(e.a), f.row(e.b)))))
            .sum()
    };
    0.5 * data
        + 0.5 * config.alpha * (norm_sq(x.as_slice()) + norm_sq(y.as_slice()))
        + pairwise(x, graph_x, &config.penalty_x)
        + pairwise(y, graph_y, &config.penalty_y)
}
