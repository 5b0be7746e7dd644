use alloc::format;

use crate::error::{Error, Result};
use crate::graph::PairGraph;
use crate::penalty::PenaltySpec;

/// Hyperparameters of one solver run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunConfig {
    /// Latent dimension `d`.
    pub rank: usize,
    /// Ridge strength on both factors.
    pub alpha: f64,
    /// ADMM penalty parameter.
    pub eta: f64,
    /// Pairwise penalty on rows of `X`; its `gamma` is `gamma_X`.
    pub penalty_x: PenaltySpec,
    /// Pairwise penalty on rows of `Y`; its `gamma` is `gamma_Y`.
    pub penalty_y: PenaltySpec,
    pub max_iter: usize,
    /// Stop once `D_k < tol1`.
    pub tol1: f64,
    /// Stop once `|D_{k-1} - D_k| < tol2`.
    pub tol2: f64,
    /// CG stops at residual `cg_residual_scale * sqrt(d n) / (k + 1)^cg_residual_exponent`.
    pub cg_residual_scale: f64,
    pub cg_residual_exponent: f64,
    pub cg_max_inner: usize,
    /// Standard deviation multiplier for the random initial iterate.
    pub init_scale: f64,
    /// Correction coefficients of the monitored descent quantity
    /// `L + sigma_x ||X^k - X^{k-1}||^2 + sigma_y ||Y^k - Y^{k-1}||^2`.
    pub descent_sigma_x: f64,
    pub descent_sigma_y: f64,
    /// Any iterate norm above this aborts the run.
    pub divergence_bound: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rank: 4,
            alpha: 1.0,
            eta: 1e4,
            penalty_x: PenaltySpec::default(),
            penalty_y: PenaltySpec::default(),
            max_iter: 500,
            tol1: 1e-1,
            tol2: 1e-4,
            cg_residual_scale: 1e3,
            cg_residual_exponent: 1.2,
            cg_max_inner: 5,
            init_scale: 0.1,
            descent_sigma_x: 0.0,
            descent_sigma_y: 0.0,
            divergence_bound: 1e12,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn gamma_x(&self) -> f64 {
        self.penalty_x.gamma
    }

    pub fn gamma_y(&self) -> f64 {
        self.penalty_y.gamma
    }

    pub fn set_gamma_x(&mut self, gamma: f64) {
        self.penalty_x.gamma = gamma;
    }

    pub fn set_gamma_y(&mut self, gamma: f64) {
        self.penalty_y.gamma = gamma;
    }

    /// CG residual threshold at outer iteration `k` for a block of `n` latent vectors.
    pub fn cg_threshold(&self, k: usize, n: usize) -> f64 {
        self.cg_residual_scale * libm::sqrt((self.rank * n) as f64)
            / libm::pow((k + 1) as f64, self.cg_residual_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        positive("eta", self.eta)?;
        positive("tol1", self.tol1)?;
        positive("tol2", self.tol2)?;
        positive("cg_residual_scale", self.cg_residual_scale)?;
        positive("cg_residual_exponent", self.cg_residual_exponent)?;
        positive("divergence_bound", self.divergence_bound)?;
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be >= 0, got {}",
                self.init_scale
            )));
        }
        if self.descent_sigma_x < 0.0 || self.descent_sigma_y < 0.0 {
            return Err(Error::Config("descent corrections must be >= 0".into()));
        }
        self.penalty_x.validate()?;
        self.penalty_y.validate()
    }

    /// Checks `eta > 2 varsigma0 max_l w_l` for both graphs, naming the
    /// offending edge when it fails.
    pub fn check_admissible(&self, graph_x: &PairGraph, graph_y: &PairGraph) -> Result<()> {
        check_side("X", &self.penalty_x, graph_x, self.eta)?;
        check_side("Y", &self.penalty_y, graph_y, self.eta)
    }
}

fn check_side(side: &str, penalty: &PenaltySpec, graph: &PairGraph, eta: f64) -> Result<()> {
    let s0 = penalty.strong_convexity();
    if s0 == 0.0 {
        return Ok(());
    }
    if let Some(e) = graph.edges().iter().max_by(|a, b| a.weight.total_cmp(&b.weight)) {
        if !(eta > 2.0 * s0 * e.weight) {
            return Err(Error::Config(format!(
                "eta = {eta} is not above 2 * varsigma0 * w = {} for {side}-graph edge ({}, {}) with weight {}",
                2.0 * s0 * e.weight,
                e.a,
                e.b,
                e.weight
            )));
        }
    }
    Ok(())
}
