//! Synthetic subgroup experiments: LLFMC against the `gamma = 0` baseline.

use std::fmt::Write as _;

use llfmc_core::analysis::{
    generate_subgroup_instance, identify_subgroups, pairwise_agreement, relative_error_factored, similarity_matrix,
    GroupMembership, SubgroupInstance, SubgroupSpec,
};
use llfmc_core::solver::{solve_with, Monitor, Silent};
use llfmc_core::{FactorPair, PairGraph, PenaltySpec, RunConfig, Solution, Weighting};
use serde::Serialize;

use crate::error::Result;
use crate::pipeline::{build_graph, DistanceKind, GraphSource, Side};

/// Default subgroup threshold.
pub const TAU: f64 = 0.01;

/// Solver settings for synthetic instances.
///
/// Instances are scaled to `||M||_F = 1e6`, so the ridge has to grow with
/// the data or it never pins the `X`/`Y` gauge and the error drifts with
/// the iteration count. `gamma * t = 5` puts the MCP plateau just above
/// the noise-level gap between same-group rows; `eta / gamma = 1e-2` keeps
/// `eta > w / t` for adaptive weights up to 0.05. The default `tol1` fires
/// spuriously while the early CG tolerance is loose, hence the tighter one.
pub fn default_config() -> RunConfig {
    const GAMMA: f64 = 1e6;
    RunConfig {
        rank: 5,
        alpha: 1e3,
        eta: 1e4,
        penalty_x: PenaltySpec::mcp(GAMMA, 5.0 / GAMMA),
        penalty_y: PenaltySpec::mcp(GAMMA, 5.0 / GAMMA),
        max_iter: 2000,
        tol1: 1e-3,
        tol2: 1e-12,
        ..RunConfig::default()
    }
}

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub spec: SubgroupSpec,
    /// Penalised run; the baseline is the same configuration with both
    /// strengths set to zero.
    pub config: RunConfig,
    /// Neighbours per node as a fraction of the side length.
    pub k_fraction: f64,
    pub weighting: Weighting,
    pub tau: f64,
}

impl SynthOptions {
    pub fn new(spec: SubgroupSpec, config: RunConfig) -> Self {
        Self {
            spec,
            config,
            k_fraction: 0.15,
            weighting: Weighting::Adaptive,
            tau: TAU,
        }
    }

    /// `round(k_fraction * n)` clamped to `[1, n - 1]`.
    pub fn neighbours(&self, n: usize) -> usize {
        ((self.k_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    }
}

/// What one method recovered.
#[derive(Clone, Debug, Serialize)]
pub struct MethodResult {
    pub rel_err: f64,
    pub agreement_x: f64,
    pub agreement_y: f64,
    pub groups_x: usize,
    pub groups_y: usize,
    pub iterations: usize,
    #[serde(skip)]
    pub membership_x: GroupMembership,
    #[serde(skip)]
    pub membership_y: GroupMembership,
    #[serde(skip)]
    pub factors: FactorPair,
}

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub spec: SubgroupSpec,
    pub instance: SubgroupInstance,
    pub graph_x: PairGraph,
    pub graph_y: PairGraph,
    pub llfmc: MethodResult,
    pub baseline: MethodResult,
    pub tau: f64,
}

impl SynthOutcome {
    /// `"no subgroups"` when every row and every column is its own group.
    pub fn label(&self) -> &'static str {
        if self.spec.k_x == self.spec.n && self.spec.k_y == self.spec.m {
            "no subgroups"
        } else {
            "subgroups"
        }
    }

    /// Raw pairwise indicators of a method's estimated rows of `X`.
    pub fn similarity_x(&self, method: &MethodResult) -> Vec<bool> {
        similarity_matrix(&method.factors.x, self.tau)
    }

    pub fn similarity_y(&self, method: &MethodResult) -> Vec<bool> {
        similarity_matrix(&method.factors.y, self.tau)
    }
}

fn evaluate(solution: &Solution, inst: &SubgroupInstance, tau: f64) -> Result<MethodResult> {
    let f = &solution.factors;
    let gx = identify_subgroups(&f.x, tau);
    let gy = identify_subgroups(&f.y, tau);
    Ok(MethodResult {
        rel_err: relative_error_factored(f, &inst.truth)?,
        agreement_x: pairwise_agreement(&gx, &inst.groups_x)?,
        agreement_y: pairwise_agreement(&gy, &inst.groups_y)?,
        groups_x: gx.n_groups(),
        groups_y: gy.n_groups(),
        iterations: solution.iterations(),
        membership_x: gx,
        membership_y: gy,
        factors: f.clone(),
    })
}

/// Generates the instance, builds d1 k-NN graphs on the observed entries
/// and solves twice on the same graphs: with the configured penalties and
/// with both strengths set to zero.
pub fn run(opts: &SynthOptions, monitor: &mut impl Monitor) -> Result<SynthOutcome> {
    let inst = generate_subgroup_instance(&opts.spec)?;
    let m = &inst.observed;
    let source = |n: usize| GraphSource::Knn {
        distance: DistanceKind::D1,
        k: opts.neighbours(n),
        weighting: opts.weighting,
    };
    let seed = opts.config.seed;
    let graph_x = build_graph(m, Side::Rows, &source(m.n_rows()), seed)?;
    let graph_y = build_graph(m, Side::Cols, &source(m.n_cols()), seed)?;

    let penalised = solve_with(m, &graph_x, &graph_y, &opts.config, monitor)?;
    let mut base_config = opts.config.clone();
    base_config.set_gamma_x(0.0);
    base_config.set_gamma_y(0.0);
    let baseline = solve_with(m, &graph_x, &graph_y, &base_config, &mut Silent)?;
    Ok(SynthOutcome {
        spec: opts.spec.clone(),
        llfmc: evaluate(&penalised, &inst, opts.tau)?,
        baseline: evaluate(&baseline, &inst, opts.tau)?,
        instance: inst,
        graph_x,
        graph_y,
        tau: opts.tau,
    })
}

pub const CSV_HEADER: &str = "n,m,d,k_x,k_y,sigma,rho,seed,label,relerr_llfmc,relerr_baseline,\
agreement_x_llfmc,agreement_y_llfmc,agreement_x_baseline,agreement_y_baseline,\
groups_x_llfmc,groups_y_llfmc,groups_x_baseline,groups_y_baseline,iterations_llfmc,iterations_baseline";

pub fn csv_row(o: &SynthOutcome) -> String {
    let s = &o.spec;
    let (a, b) = (&o.llfmc, &o.baseline);
    let mut out = String::new();
    write!(
        out,
        "{},{},{},{},{},{:?},{:?},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{},{},{},{}",
        s.n,
        s.m,
        s.rank,
        s.k_x,
        s.k_y,
        s.sigma,
        s.rho,
        s.seed,
        o.label(),
        a.rel_err,
        b.rel_err,
        a.agreement_x,
        a.agreement_y,
        b.agreement_x,
        b.agreement_y,
        a.groups_x,
        a.groups_y,
        b.groups_x,
        b.groups_y,
        a.iterations,
        b.iterations
    )
    .expect("write to string");
    out
}
