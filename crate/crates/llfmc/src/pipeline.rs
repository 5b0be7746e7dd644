//! Graph construction and the train pipeline shared by every command.

use std::path::PathBuf;
use std::str::FromStr;

use llfmc_core::graph::{build_knn_graph, refine_weights, ImputedDistance, OverlapDistance};
use llfmc_core::solver::{solve_with, Monitor, Silent};
use llfmc_core::{ObservedMatrix, PairGraph, RunConfig, Solution, Weighting};

use crate::distances::parallel_table;
use crate::error::{Error, Result};

/// Which rows of the data a graph connects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Rows of the matrix (users), penalising rows of `X`.
    Rows,
    /// Columns (items), penalising rows of `Y`.
    Cols,
}

impl Side {
    /// Seed offset so the two sides cut cycles independently.
    fn cut_seed(self, seed: u64) -> u64 {
        match self {
            Side::Rows => seed,
            Side::Cols => seed ^ 0x9e37_79b9_7f4a_7c15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceKind {
    /// RMS difference over co-observed entries.
    D1,
    /// Mean-imputed distance over the union of observed entries.
    D2,
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d1" => Ok(Self::D1),
            "d2" => Ok(Self::D2),
            other => Err(Error::Config(format!("unknown distance '{other}' (expected d1 or d2)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    None,
    File(PathBuf),
    Knn {
        distance: DistanceKind,
        k: usize,
        weighting: Weighting,
    },
}

/// Graphs for both sides plus the optional second-pass refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPlan {
    pub rows: GraphSource,
    pub cols: GraphSource,
    /// Rebuild adaptive graphs from first-pass factors with this many
    /// neighbours and solve again.
    pub refine_k: Option<usize>,
}

impl GraphPlan {
    pub fn none() -> Self {
        Self {
            rows: GraphSource::None,
            cols: GraphSource::None,
            refine_k: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Graphs {
    pub x: PairGraph,
    pub y: PairGraph,
}

impl Graphs {
    pub fn empty(m: &ObservedMatrix) -> Self {
        Self {
            x: PairGraph::empty(m.n_rows()),
            y: PairGraph::empty(m.n_cols()),
        }
    }
}

/// k-NN graph over the rows of `m`, before any cycle cutting.
pub fn knn_graph(m: &ObservedMatrix, distance: DistanceKind, k: usize, weighting: Weighting) -> Result<PairGraph> {
    let table = match distance {
        DistanceKind::D1 => parallel_table(&OverlapDistance::new(m)),
        DistanceKind::D2 => parallel_table(&ImputedDistance::new(m)),
    };
    Ok(build_knn_graph(&table, k, weighting)?)
}

/// Builds (or reads) one side's graph and cuts its cycles.
pub fn build_graph(m: &ObservedMatrix, side: Side, source: &GraphSource, seed: u64) -> Result<PairGraph> {
    let n = match side {
        Side::Rows => m.n_rows(),
        Side::Cols => m.n_cols(),
    };
    let raw = match source {
        GraphSource::None => return Ok(PairGraph::empty(n)),
        GraphSource::File(path) => crate::io::read_graph_csv(path, n)?,
        GraphSource::Knn { distance, k, weighting } => match side {
            Side::Rows => knn_graph(m, *distance, *k, *weighting)?,
            Side::Cols => knn_graph(&m.transpose(), *distance, *k, *weighting)?,
        },
    };
    let cut = raw.cut_cycles(side.cut_seed(seed));
    log::info!(
        "{side:?} graph: {} nodes, {} edges, {} after cutting cycles",
        n,
        raw.n_edges(),
        cut.n_edges()
    );
    Ok(cut)
}

pub fn build_graphs(m: &ObservedMatrix, plan: &GraphPlan, seed: u64) -> Result<Graphs> {
    Ok(Graphs {
        x: build_graph(m, Side::Rows, &plan.rows, seed)?,
        y: build_graph(m, Side::Cols, &plan.cols, seed)?,
    })
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub solution: Solution,
    /// Graphs used by the final solve.
    pub graphs: Graphs,
    pub first_pass: Option<Solution>,
}

/// Solves on fixed graphs; with `refine_k` the first solution's factors
/// define new adaptive graphs (on the sides that had a graph) for a second
/// solve. Only the final solve reports to `monitor`.
pub fn fit(
    m: &ObservedMatrix,
    graphs: &Graphs,
    refine_k: Option<usize>,
    config: &RunConfig,
    monitor: &mut impl Monitor,
) -> Result<Fit> {
    let Some(k) = refine_k else {
        let solution = solve_with(m, &graphs.x, &graphs.y, config, monitor)?;
        return Ok(Fit {
            solution,
            graphs: graphs.clone(),
            first_pass: None,
        });
    };
    let first = solve_with(m, &graphs.x, &graphs.y, config, &mut Silent)?;
    log::info!("first pass: {} iterations, stop {:?}", first.iterations(), first.stop);
    let refine = |g: &PairGraph, latent, side: Side| -> Result<PairGraph> {
        if g.n_edges() == 0 {
            return Ok(g.clone());
        }
        Ok(refine_weights(latent, g.n_nodes(), k)?.cut_cycles(side.cut_seed(config.seed)))
    };
    let refined = Graphs {
        x: refine(&graphs.x, &first.factors.x, Side::Rows)?,
        y: refine(&graphs.y, &first.factors.y, Side::Cols)?,
    };
    let solution = solve_with(m, &refined.x, &refined.y, config, monitor)?;
    Ok(Fit {
        solution,
        graphs: refined,
        first_pass: Some(first),
    })
}
