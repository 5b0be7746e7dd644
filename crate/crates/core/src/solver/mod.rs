//! Bregman-modified ADMM for the pairwise-penalised factorization.
//!
//! The problem is split with edge variables `p_l = x_a - x_b` (and `q_l` for
//! `Y`). Each outer iteration runs, in order:
//!
//! 1. edgewise proximal maps for `P` and then `Q`,
//! 2. the `X` subproblem with an extra `1/2 ||X - X^k||_F^2` term, solved
//!    inexactly by warm-started conjugate gradient,
//! 3. the `Y` subproblem likewise, using the new `X`,
//! 4. dual ascent on `Lambda` and `V`.
//!
//! The run stops when the normalised change `D_k` drops below `tol1`, when
//! successive `D_k` differ by less than `tol2`, or at `max_iter`.

pub mod ops;

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::PairGraph;
use crate::linalg::{FactorPair, Matrix};
use crate::observed::ObservedMatrix;

pub use ops::{
    assemble_rhs_x, assemble_rhs_y, augmented_lagrangian, cg_solve_x, cg_solve_y, conjugate_gradient, dual_update,
    hessian_vec_x, objective, update_p, update_q, CgReport, LinearOperator, SubproblemOperator,
};

/// Full ADMM iterate. Edge-indexed matrices store one row per edge, i.e. row
/// `l` of `p` is the column `p_l` of `P`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverState {
    pub x: Matrix,
    pub y: Matrix,
    pub p: Matrix,
    pub q: Matrix,
    pub lambda: Matrix,
    pub v: Matrix,
    /// Index of the next outer iteration (starts at 1).
    pub iteration: usize,
}

impl SolverState {
    /// Random start: `X, Y, Lambda, V` drawn i.i.d. `scale * N(0, 1)` from a
    /// seeded stream in that order; `P, Q` start at zero.
    pub fn random(
        n_rows: usize,
        n_cols: usize,
        edges_x: usize,
        edges_y: usize,
        rank: usize,
        scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize| {
            Matrix::from_fn(rows, rank, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
        };
        let x = draw(n_rows);
        let y = draw(n_cols);
        let lambda = draw(edges_x);
        let v = draw(edges_y);
        Self {
            x,
            y,
            p: Matrix::zeros(edges_x, rank),
            q: Matrix::zeros(edges_y, rank),
            lambda,
            v,
            iteration: 1,
        }
    }

    /// Start from given factors with zero edge variables and duals.
    pub fn from_factors(factors: FactorPair, edges_x: usize, edges_y: usize) -> Self {
        let d = factors.rank();
        Self {
            p: Matrix::zeros(edges_x, d),
            q: Matrix::zeros(edges_y, d),
            lambda: Matrix::zeros(edges_x, d),
            v: Matrix::zeros(edges_y, d),
            x: factors.x,
            y: factors.y,
            iteration: 1,
        }
    }

    pub fn factors(&self) -> FactorPair {
        FactorPair {
            x: self.x.clone(),
            y: self.y.clone(),
        }
    }

    fn largest_norm(&self) -> (&'static str, f64) {
        [
            ("||X||_F", self.x.frobenius_norm()),
            ("||Y||_F", self.y.frobenius_norm()),
            ("||P||_F", self.p.frobenius_norm()),
            ("||Q||_F", self.q.frobenius_norm()),
            ("||Lambda||_F", self.lambda.frobenius_norm()),
            ("||V||_F", self.v.frobenius_norm()),
        ]
        .into_iter()
        .fold(("", 0.0), |best, cur| {
            // a non-finite norm wins so it gets reported
            if !best.1.is_finite() {
                best
            } else if !cur.1.is_finite() || cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
    }
}

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationRecord {
    pub k: usize,
    /// `||X^k - X^{k+1}||_F / (2 sqrt(d n)) + ||Y^k - Y^{k+1}||_F / (2 sqrt(d m))`.
    pub d_k: f64,
    /// `L_eta` at the new iterate.
    pub augmented_lagrangian: f64,
    /// `L_eta + sigma_x ||dX||^2 + sigma_y ||dY||^2`.
    pub monitored: f64,
    pub primal_residual_x: f64,
    pub primal_residual_y: f64,
    pub cg_iters_x: usize,
    pub cg_iters_y: usize,
    pub cg_residual_x: f64,
    pub cg_residual_y: f64,
    /// CG thresholds used for the X and Y solves.
    pub cg_threshold_x: f64,
    pub cg_threshold_y: f64,
    /// `1/2 (||t_x||^2 + ||t_y||^2)` where `t` are the final CG residuals.
    pub descent_slack: f64,
    /// Seconds since the start of the run, as reported by the monitor.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    /// `D_k < tol1`.
    SmallChange,
    /// `|D_{k-1} - D_k| < tol2`.
    Stalled,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub factors: FactorPair,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
    pub state: SolverState,
}

impl Solution {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Hooks into a running solve. Both methods have no-op defaults.
pub trait Monitor {
    /// Seconds elapsed since the solve started.
    fn elapsed(&self) -> f64 {
        0.0
    }

    fn on_iteration(&mut self, _record: &IterationRecord, _state: &SolverState) {}
}

/// Monitor that does nothing; wall times are reported as zero.
pub struct Silent;

impl Monitor for Silent {}

fn check_inputs(m: &ObservedMatrix, graph_x: &PairGraph, graph_y: &PairGraph, config: &RunConfig) -> Result<()> {
    config.validate()?;
    if graph_x.n_nodes() != m.n_rows() || graph_y.n_nodes() != m.n_cols() {
        return Err(Error::Dimension(format!(
            "graphs have {} and {} nodes for a {}x{} matrix",
            graph_x.n_nodes(),
            graph_y.n_nodes(),
            m.n_rows(),
            m.n_cols()
        )));
    }
    for (name, g) in [("X", graph_x), ("Y", graph_y)] {
        if !g.is_forest() {
            return Err(Error::Config(format!(
                "the {name}-graph has cycles; cut them before solving"
            )));
        }
    }
    config.check_admissible(graph_x, graph_y)
}

/// Runs the solver from the seeded random start.
pub fn solve(m: &ObservedMatrix, graph_x: &PairGraph, graph_y: &PairGraph, config: &RunConfig) -> Result<Solution> {
    solve_with(m, graph_x, graph_y, config, &mut Silent)
}

pub fn solve_with(
    m: &ObservedMatrix,
    graph_x: &PairGraph,
    graph_y: &PairGraph,
    config: &RunConfig,
    monitor: &mut impl Monitor,
) -> Result<Solution> {
    let state = SolverState::random(
        m.n_rows(),
        m.n_cols(),
        graph_x.n_edges(),
        graph_y.n_edges(),
        config.rank,
        config.init_scale,
        config.seed,
    );
    solve_from(state, m, graph_x, graph_y, config, monitor)
}

/// Runs the solver from a caller-provided iterate.
pub fn solve_from(
    mut state: SolverState,
    m: &ObservedMatrix,
    graph_x: &PairGraph,
    graph_y: &PairGraph,
    config: &RunConfig,
    monitor: &mut impl Monitor,
) -> Result<Solution> {
    check_inputs(m, graph_x, graph_y, config)?;
    let d = config.rank;
    if state.x.shape() != (m.n_rows(), d)
        || state.y.shape() != (m.n_cols(), d)
        || state.p.shape() != (graph_x.n_edges(), d)
        || state.lambda.shape() != (graph_x.n_edges(), d)
        || state.q.shape() != (graph_y.n_edges(), d)
        || state.v.shape() != (graph_y.n_edges(), d)
    {
        return Err(Error::Dimension("initial state does not match the problem".into()));
    }
    let norm_x = 2.0 * libm::sqrt((d * m.n_rows()).max(1) as f64);
    let norm_y = 2.0 * libm::sqrt((d * m.n_cols()).max(1) as f64);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut stop = StopReason::MaxIter;

    for _ in 0..config.max_iter {
        let k = state.iteration;
        state.p = update_p(&state, graph_x, &config.penalty_x, config.eta)?;
        state.q = update_q(&state, graph_y, &config.penalty_y, config.eta)?;

        let (x_next, cg_x) = cg_solve_x(&state, m, graph_x, config, k)?;
        let dx = state.x.distance(&x_next);
        state.x = x_next;
        let (y_next, cg_y) = cg_solve_y(&state, m, graph_y, config, k)?;
        let dy = state.y.distance(&y_next);
        state.y = y_next;

        dual_update(&mut state, graph_x, graph_y, config.eta);

        let (quantity, value) = state.largest_norm();
        if !value.is_finite() || value > config.divergence_bound {
            return Err(Error::Divergence {
                iteration: k,
                quantity,
                value,
            });
        }

        let lagrangian = augmented_lagrangian(&state, m, graph_x, graph_y, config);
        let record = IterationRecord {
            k,
            d_k: dx / norm_x + dy / norm_y,
            augmented_lagrangian: lagrangian,
            monitored: lagrangian + config.descent_sigma_x * dx * dx + config.descent_sigma_y * dy * dy,
            primal_residual_x: ops::constraint_residual(&state.x, graph_x, &state.p),
            primal_residual_y: ops::constraint_residual(&state.y, graph_y, &state.q),
            cg_iters_x: cg_x.iterations,
            cg_iters_y: cg_y.iterations,
            cg_residual_x: cg_x.residual,
            cg_residual_y: cg_y.residual,
            cg_threshold_x: config.cg_threshold(k, m.n_rows()),
            cg_threshold_y: config.cg_threshold(k, m.n_cols()),
            descent_slack: 0.5 * (cg_x.residual * cg_x.residual + cg_y.residual * cg_y.residual),
            wall_time: monitor.elapsed(),
        };
        state.iteration += 1;
        monitor.on_iteration(&record, &state);
        let previous = trace.last().map(|r| r.d_k);
        let d_k = record.d_k;
        trace.push(record);

        if d_k < config.tol1 {
            stop = StopReason::SmallChange;
            break;
        }
        if previous.is_some_and(|p| (p - d_k).abs() < config.tol2) {
            stop = StopReason::Stalled;
            break;
        }
    }

    Ok(Solution {
        factors: state.factors(),
        trace,
        stop,
        state,
    })
}
