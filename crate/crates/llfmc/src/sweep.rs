//! Cartesian grid search over penalty strengths and the MCP shape `t`.

use std::fmt::Write as _;

use llfmc_core::analysis::rmse_on;
use llfmc_core::solver::Silent;
use llfmc_core::{ObservedMatrix, RunConfig, StopReason};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{fit, Graphs};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub gamma_x: Vec<f64>,
    pub gamma_y: Vec<f64>,
    pub t: Vec<f64>,
}

/// `2^-2, 2^-1, ..., 2^10`.
pub fn full_gammas() -> Vec<f64> {
    (-2..=10).map(|e| 2f64.powi(e)).collect()
}

impl Grid {
    /// `gamma_X, gamma_Y` in `2^{-2..10}` and `t` in `{0.5, 2, 20}`.
    pub fn full() -> Self {
        Self {
            gamma_x: full_gammas(),
            gamma_y: full_gammas(),
            t: vec![0.5, 2.0, 20.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [("gamma_x", &self.gamma_x), ("gamma_y", &self.gamma_y), ("t", &self.t)] {
            if values.is_empty() {
                return Err(Error::Config(format!("sweep grid has no {name} values")));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Config(format!(
                    "sweep {name} value {v} is not a finite nonnegative number"
                )));
            }
        }
        if let Some(t) = self.t.iter().find(|t| **t == 0.0) {
            return Err(Error::Config(format!("sweep t value {t} must be positive")));
        }
        Ok(())
    }

    /// Cells in `gamma_x`-major order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.gamma_x.len() * self.gamma_y.len() * self.t.len());
        for &gamma_x in &self.gamma_x {
            for &gamma_y in &self.gamma_y {
                for &t in &self.t {
                    out.push(Cell { gamma_x, gamma_y, t });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub t: f64,
}

impl Cell {
    pub fn is_baseline(&self) -> bool {
        self.gamma_x == 0.0 && self.gamma_y == 0.0
    }

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        c.set_gamma_x(self.gamma_x);
        c.set_gamma_y(self.gamma_y);
        c.penalty_x.t = self.t;
        c.penalty_y.t = self.t;
        c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    /// RMSE on the selection set; `None` when the cell failed.
    pub rmse: Option<f64>,
    pub iterations: usize,
    pub stop: Option<StopReason>,
    /// `ok`, `diverged` or the error message.
    pub status: String,
}

/// Fits every cell on `fit_data` and scores it on `select_on`. Cells run in
/// parallel, each one single-threaded, so results do not depend on the
/// pool size. A cell that diverges or is rejected is recorded, not fatal;
/// the sweep fails only when no cell produced a score.
pub fn run_grid(
    fit_data: &ObservedMatrix,
    select_on: &ObservedMatrix,
    graphs: &Graphs,
    refine_k: Option<usize>,
    base: &RunConfig,
    grid: &Grid,
) -> Result<Vec<CellResult>> {
    grid.validate()?;
    let cells = grid.cells();
    let results: Vec<(CellResult, Option<Error>)> = cells
        .par_iter()
        .map(|cell| {
            let config = cell.apply(base);
            match fit(fit_data, graphs, refine_k, &config, &mut Silent)
                .and_then(|f| Ok((rmse_on(&f.solution.factors, select_on)?, f)))
            {
                Ok((rmse, f)) => (
                    CellResult {
                        cell: *cell,
                        rmse: Some(rmse),
                        iterations: f.solution.iterations(),
                        stop: Some(f.solution.stop),
                        status: "ok".into(),
                    },
                    None,
                ),
                Err(e) => {
                    let status = match &e {
                        Error::Core(llfmc_core::Error::Divergence { .. }) => "diverged".to_string(),
                        other => other.to_string(),
                    };
                    log::warn!("cell {cell:?}: {status}");
                    (
                        CellResult {
                            cell: *cell,
                            rmse: None,
                            iterations: 0,
                            stop: None,
                            status,
                        },
                        Some(e),
                    )
                }
            }
        })
        .collect();
    if results.iter().all(|(r, _)| r.rmse.is_none()) {
        let (_, err) = results.into_iter().next().expect("grid is nonempty");
        return Err(err.expect("failed cell carries its error"));
    }
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

fn lowest<'a>(results: impl Iterator<Item = &'a CellResult>) -> Option<&'a CellResult> {
    results
        .filter(|r| r.rmse.is_some())
        .min_by(|a, b| a.rmse.unwrap().total_cmp(&b.rmse.unwrap()))
}

/// Lowest-RMSE cell; ties go to the earlier cell.
pub fn best(results: &[CellResult]) -> Option<&CellResult> {
    lowest(results.iter())
}

/// Best cell among those with both strengths zero.
pub fn best_baseline(results: &[CellResult]) -> Option<&CellResult> {
    lowest(results.iter().filter(|r| r.cell.is_baseline()))
}

pub fn to_csv(results: &[CellResult]) -> String {
    let mut out = String::from("gamma_x,gamma_y,t,rmse,iterations,stop,baseline,status\n");
    for r in results {
        let rmse = r.rmse.map(|v| format!("{v:?}")).unwrap_or_default();
        let stop = r
            .stop
            .map(|s| {
                serde_json::to_value(s)
                    .unwrap()
                    .as_str()
                    .unwrap_or_default()
                    .to_string()
            })
            .unwrap_or_default();
        writeln!(
            out,
            "{:?},{:?},{:?},{rmse},{},{stop},{},\"{}\"",
            r.cell.gamma_x,
            r.cell.gamma_y,
            r.cell.t,
            r.iterations,
            r.cell.is_baseline(),
            r.status.replace('"', "'")
        )
        .expect("write to string");
    }
    out
}
