//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use llfmc_core::analysis::{rmse, rmse_on, SubgroupSpec};
use llfmc_core::solver::{Monitor, Silent};
use llfmc_core::{FactorPair, ObservedMatrix, PenaltyKind, RunConfig, Weighting};
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{self, IdMap, MovieLensFormat};
use crate::manifest::Manifest;
use crate::pipeline::{build_graphs, fit, DistanceKind, GraphPlan, GraphSource, Side};
use crate::sweep::{self, Grid};
use crate::synth::{self, SynthOptions};
use crate::trace::TraceWriter;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "LLFMC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "llfmc", version, about = "Graph-penalised low-rank matrix completion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build graphs, solve and report train/test RMSE.
    Train(TrainArgs),
    /// Score saved factors on a ratings file.
    Evaluate(EvaluateArgs),
    /// Synthetic subgroup experiment against the unpenalised baseline.
    Synth(SynthArgs),
    /// Grid search over gamma_x, gamma_y and t.
    Sweep(SweepArgs),
    /// Build and save k-NN graphs without solving.
    GraphBuild(GraphBuildArgs),
}

fn parse_penalty(s: &str) -> std::result::Result<PenaltyKind, String> {
    s.parse().map_err(|e: llfmc_core::Error| e.to_string())
}

fn parse_weighting(s: &str) -> std::result::Result<Weighting, String> {
    s.parse().map_err(|e: llfmc_core::Error| e.to_string())
}

fn parse_distance(s: &str) -> std::result::Result<DistanceKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    MovieLens(MovieLensFormat),
    Csv,
}

fn parse_format(s: &str) -> std::result::Result<DataFormat, String> {
    match s {
        "csv" => Ok(DataFormat::Csv),
        other => other
            .parse()
            .map(DataFormat::MovieLens)
            .map_err(|_| format!("unknown format '{other}' (expected csv, tab_100k or dat_1m)")),
    }
}

/// Solver settings; each flag overrides the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Penalty kind for both sides: mcp, scad, mtype, l1, sql2, none.
    #[arg(long, value_parser = parse_penalty)]
    pub penalty: Option<PenaltyKind>,
    #[arg(long, value_parser = parse_penalty)]
    pub penalty_x: Option<PenaltyKind>,
    #[arg(long, value_parser = parse_penalty)]
    pub penalty_y: Option<PenaltyKind>,
    #[arg(long)]
    pub gamma_x: Option<f64>,
    #[arg(long)]
    pub gamma_y: Option<f64>,
    /// MCP concavity, both sides.
    #[arg(long)]
    pub t: Option<f64>,
    /// M-type half-width, both sides.
    #[arg(long)]
    pub b: Option<f64>,
    /// SCAD shape, both sides.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol1: Option<f64>,
    #[arg(long)]
    pub tol2: Option<f64>,
    #[arg(long)]
    pub cg_residual_scale: Option<f64>,
    #[arg(long)]
    pub cg_residual_exponent: Option<f64>,
    #[arg(long)]
    pub cg_max_inner: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub descent_sigma_x: Option<f64>,
    #[arg(long)]
    pub descent_sigma_y: Option<f64>,
    #[arg(long)]
    pub divergence_bound: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunFlags {
    /// Config file (if any) on top of `base`, then the flags.
    pub fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                crate::config_file::parse_into(base, &text)?
            }
            None => base,
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(rank => rank, alpha => alpha, eta => eta, max_iter => max_iter, tol1 => tol1,
            tol2 => tol2, cg_residual_scale => cg_residual_scale,
            cg_residual_exponent => cg_residual_exponent, cg_max_inner => cg_max_inner,
            init_scale => init_scale, descent_sigma_x => descent_sigma_x,
            descent_sigma_y => descent_sigma_y, divergence_bound => divergence_bound, seed => seed);
        if let Some(k) = self.penalty {
            c.penalty_x.kind = k;
            c.penalty_y.kind = k;
        }
        if let Some(k) = self.penalty_x {
            c.penalty_x.kind = k;
        }
        if let Some(k) = self.penalty_y {
            c.penalty_y.kind = k;
        }
        for p in [&mut c.penalty_x, &mut c.penalty_y] {
            if let Some(t) = self.t {
                p.t = t;
            }
            if let Some(b) = self.b {
                p.b = b;
            }
            if let Some(a) = self.a {
                p.a = a;
            }
        }
        if let Some(g) = self.gamma_x {
            c.set_gamma_x(g);
        }
        if let Some(g) = self.gamma_y {
            c.set_gamma_y(g);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataFlags {
    /// Training ratings (or the only ratings file with --test-fraction).
    #[arg(long)]
    pub data: PathBuf,
    /// csv (0-based `i,j,value`), tab_100k or dat_1m.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: DataFormat,
    /// Held-out ratings in the same format.
    #[arg(long, conflicts_with = "test_fraction")]
    pub test: Option<PathBuf>,
    /// Hold out this fraction of --data as the test set.
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct GraphFlags {
    /// Edge list `l1,l2,w` over rows.
    #[arg(long)]
    pub graph_x: Option<PathBuf>,
    /// Edge list `l1,l2,w` over columns.
    #[arg(long)]
    pub graph_y: Option<PathBuf>,
    /// Build k-NN graphs for sides without a file, with distance d1 or d2.
    #[arg(long, value_parser = parse_distance)]
    pub auto_graph: Option<DistanceKind>,
    /// Neighbours per node for both sides.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub k_x: Option<usize>,
    #[arg(long)]
    pub k_y: Option<usize>,
    /// unit or adaptive (inverse distance).
    #[arg(long, default_value = "unit", value_parser = parse_weighting)]
    pub weighting: Weighting,
    /// Solve, rebuild adaptive graphs from the first factors, solve again.
    #[arg(long)]
    pub two_pass: bool,
    /// Neighbours for the refined graphs (default: --k).
    #[arg(long)]
    pub refine_k: Option<usize>,
}

impl GraphFlags {
    pub fn plan(&self) -> GraphPlan {
        let side = |file: &Option<PathBuf>, k: Option<usize>| match (file, self.auto_graph) {
            (Some(path), _) => GraphSource::File(path.clone()),
            (None, Some(distance)) => GraphSource::Knn {
                distance,
                k: k.unwrap_or(self.k),
                weighting: self.weighting,
            },
            (None, None) => GraphSource::None,
        };
        GraphPlan {
            rows: side(&self.graph_x, self.k_x),
            cols: side(&self.graph_y, self.k_y),
            refine_k: self.two_pass.then(|| self.refine_k.unwrap_or(self.k)),
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub graphs: GraphFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: DataFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Columns (default: n).
    #[arg(long)]
    pub m: Option<usize>,
    /// Subgroups per side; a list runs one instance per value.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub k: Vec<usize>,
    /// Column subgroups when they differ from --k.
    #[arg(long)]
    pub k_y: Option<usize>,
    #[arg(long, default_value_t = 100.0)]
    pub sigma: f64,
    /// Sample rates; a list runs one instance per value.
    #[arg(long, value_delimiter = ',', default_value = "0.3")]
    pub rho: Vec<f64>,
    #[arg(long, default_value_t = 1e6)]
    pub target_fro: f64,
    /// Generator seed (the solver seed is --seed).
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Graph neighbours as a fraction of the side length.
    #[arg(long, default_value_t = 0.15)]
    pub k_fraction: f64,
    #[arg(long, default_value = "adaptive", value_parser = parse_weighting)]
    pub weighting: Weighting,
    /// Relative threshold for grouping estimated rows.
    #[arg(long, default_value_t = synth::TAU)]
    pub tau: f64,
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub graphs: GraphFlags,
    #[arg(long, value_delimiter = ',')]
    pub gammas_x: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub gammas_y: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub ts: Vec<f64>,
    /// gamma in 2^{-2..10} on both sides and t in {0.5, 2, 20}.
    #[arg(long, conflicts_with_all = ["gammas_x", "gammas_y", "ts"])]
    pub full_grid: bool,
    /// Fraction of the training data held out for selecting the cell.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GraphBuildArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: DataFormat,
    #[arg(long, default_value = "d2", value_parser = parse_distance)]
    pub distance: DistanceKind,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value = "unit", value_parser = parse_weighting)]
    pub weighting: Weighting,
    /// Keep cycles instead of cutting them to a forest.
    #[arg(long)]
    pub keep_cycles: bool,
    /// Seed for cycle cutting.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Loaded ratings with optional held-out part and id maps.
pub struct Dataset {
    pub train: ObservedMatrix,
    pub test: Option<ObservedMatrix>,
    pub ids: Option<(IdMap, IdMap)>,
}

fn load_one(path: &Path, format: DataFormat) -> Result<(ObservedMatrix, Option<(IdMap, IdMap)>)> {
    match format {
        DataFormat::Csv => Ok((io::load_csv_coo(path)?.0, None)),
        DataFormat::MovieLens(f) => {
            let r = io::load_movielens(path, f)?;
            Ok((r.matrix, Some((r.users, r.items))))
        }
    }
}

pub fn load_dataset(flags: &DataFlags, seed: u64) -> Result<Dataset> {
    match (&flags.test, flags.test_fraction) {
        (Some(test), _) => match flags.format {
            DataFormat::MovieLens(f) => {
                let (r, test) = io::load_movielens_pair(&flags.data, test, f)?;
                Ok(Dataset {
                    train: r.matrix,
                    test: Some(test),
                    ids: Some((r.users, r.items)),
                })
            }
            DataFormat::Csv => {
                let (a, _) = io::load_csv_coo(&flags.data)?;
                let (b, _) = io::load_csv_coo(test)?;
                let n = a.n_rows().max(b.n_rows());
                let m = a.n_cols().max(b.n_cols());
                Ok(Dataset {
                    train: io::load_csv_coo_shaped(&flags.data, n, m)?.0,
                    test: Some(io::load_csv_coo_shaped(test, n, m)?.0),
                    ids: None,
                })
            }
        },
        (None, Some(fraction)) => {
            let (all, ids) = load_one(&flags.data, flags.format)?;
            let (train, test) = all.split_train_test(fraction, seed)?;
            Ok(Dataset {
                train,
                test: Some(test),
                ids,
            })
        }
        (None, None) => {
            let (train, ids) = load_one(&flags.data, flags.format)?;
            Ok(Dataset { train, test: None, ids })
        }
    }
}

fn data_inputs(flags: &DataFlags, manifest: &mut Manifest) -> Result<()> {
    manifest.add_input(&flags.data)?;
    if let Some(t) = &flags.test {
        manifest.add_input(t)?;
    }
    Ok(())
}

fn graph_inputs(flags: &GraphFlags, manifest: &mut Manifest) -> Result<()> {
    for p in [&flags.graph_x, &flags.graph_y].into_iter().flatten() {
        manifest.add_input(p)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    io::write_string(path, &(serde_json::to_string_pretty(value).expect("json value") + "\n"))
}

fn write_factors(dir: &Path, f: &FactorPair) -> Result<()> {
    io::write_matrix_csv(&dir.join("x.csv"), &f.x)?;
    io::write_matrix_csv(&dir.join("y.csv"), &f.y)
}

fn stop_name(s: llfmc_core::StopReason) -> String {
    serde_json::to_value(s)
        .expect("stop reason")
        .as_str()
        .unwrap_or_default()
        .to_string()
}

fn cmd_train(a: &TrainArgs, argv: Vec<String>) -> Result<()> {
    let config = a.run.resolve(RunConfig::default())?;
    let mut manifest = Manifest::new("train", argv, config.seed, crate::config_file::echo(&config));
    data_inputs(&a.data, &mut manifest)?;
    graph_inputs(&a.graphs, &mut manifest)?;
    let data = load_dataset(&a.data, config.seed)?;
    log::info!(
        "training on {}x{} with {} entries",
        data.train.n_rows(),
        data.train.n_cols(),
        data.train.nnz()
    );
    let plan = a.graphs.plan();
    let graphs = build_graphs(&data.train, &plan, config.seed)?;
    let mut trace = TraceWriter::to_file(&a.out.join("trace.jsonl"))?;
    let result = fit(&data.train, &graphs, plan.refine_k, &config, &mut trace)?;
    let wall = trace.elapsed();
    trace.finish()?;

    let sol = &result.solution;
    let train_rmse = rmse_on(&sol.factors, &data.train)?;
    let test_rmse = data.test.as_ref().map(|t| rmse_on(&sol.factors, t)).transpose()?;
    write_factors(&a.out, &sol.factors)?;
    io::write_graph_csv(&a.out.join("graph_x.csv"), &result.graphs.x)?;
    io::write_graph_csv(&a.out.join("graph_y.csv"), &result.graphs.y)?;
    if let Some((users, items)) = &data.ids {
        io::write_id_map(&a.out.join("row_ids.csv"), users)?;
        io::write_id_map(&a.out.join("col_ids.csv"), items)?;
    }
    io::write_string(&a.out.join("config.txt"), &manifest.config)?;
    let metrics = json!({
        "train_rmse": train_rmse,
        "test_rmse": test_rmse,
        "iterations": sol.iterations(),
        "stop": stop_name(sol.stop),
        "first_pass_iterations": result.first_pass.as_ref().map(|s| s.iterations()),
        "edges_x": result.graphs.x.n_edges(),
        "edges_y": result.graphs.y.n_edges(),
        "wall_seconds": wall,
    });
    write_json(&a.out.join("metrics.json"), &metrics)?;
    manifest.write(&a.out)?;

    println!(
        "iterations {} ({}), train RMSE {train_rmse:.4}",
        sol.iterations(),
        stop_name(sol.stop)
    );
    if let Some(r) = test_rmse {
        println!("test RMSE {r:.4}");
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, argv: Vec<String>) -> Result<()> {
    let factors = FactorPair::new(
        io::read_matrix_csv(&a.model.join("x.csv"))?,
        io::read_matrix_csv(&a.model.join("y.csv"))?,
    )?;
    let mut manifest = Manifest::new("evaluate", argv, 0, String::new());
    manifest.add_input(&a.model.join("x.csv"))?;
    manifest.add_input(&a.model.join("y.csv"))?;
    manifest.add_input(&a.data)?;
    let (n, m) = (factors.x.rows(), factors.y.rows());
    let triples: Vec<(Option<usize>, Option<usize>, f64)> = match a.format {
        DataFormat::Csv => {
            let (obs, _) = io::load_csv_coo(&a.data)?;
            obs.entries()
                .iter()
                .map(|e| ((e.row < n).then_some(e.row), (e.col < m).then_some(e.col), e.value))
                .collect()
        }
        DataFormat::MovieLens(f) => {
            let (rp, cp) = (a.model.join("row_ids.csv"), a.model.join("col_ids.csv"));
            let users = io::read_id_map(&rp)?;
            let items = io::read_id_map(&cp)?;
            manifest.add_input(&rp)?;
            manifest.add_input(&cp)?;
            let raw = io::read_movielens_triples(&a.data, f)?;
            if raw.is_empty() {
                return Err(Error::NoEntries(a.data.clone()));
            }
            raw.into_iter()
                .map(|(u, i, r)| (users.index_of(u), items.index_of(i), r))
                .collect()
        }
    };
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for (i, j, r) in &triples {
        if let (Some(i), Some(j)) = (i, j) {
            pred.push(factors.predict(*i, *j));
            truth.push(*r);
        }
    }
    let skipped = triples.len() - pred.len();
    if skipped > 0 {
        log::warn!("{skipped} ratings refer to rows or columns the model has not seen; skipped");
    }
    if pred.is_empty() {
        return Err(Error::NoEntries(a.data.clone()));
    }
    let score = rmse(&pred, &truth)?;
    write_json(
        &a.out.join("metrics.json"),
        &json!({ "rmse": score, "scored": pred.len(), "skipped": skipped }),
    )?;
    manifest.write(&a.out)?;
    println!("RMSE {score:.4} on {} ratings ({skipped} skipped)", pred.len());
    Ok(())
}

fn cmd_synth(a: &SynthArgs, argv: Vec<String>) -> Result<()> {
    let config = a.run.resolve(synth::default_config())?;
    let m = a.m.unwrap_or(a.n);
    if a.k.is_empty() || a.rho.is_empty() {
        return Err(Error::Config("synth needs at least one --k and one --rho".into()));
    }
    let points: Vec<(usize, f64)> = a.k.iter().flat_map(|k| a.rho.iter().map(move |r| (*k, *r))).collect();
    let options: Vec<SynthOptions> = points
        .iter()
        .map(|&(k, rho)| {
            let spec = SubgroupSpec {
                n: a.n,
                m,
                rank: config.rank,
                k_x: k,
                k_y: a.k_y.unwrap_or(k),
                sigma: a.sigma,
                rho,
                target_fro: a.target_fro,
                seed: a.data_seed,
            };
            SynthOptions {
                k_fraction: a.k_fraction,
                weighting: a.weighting,
                tau: a.tau,
                ..SynthOptions::new(spec, config.clone())
            }
        })
        .collect();
    let outcomes = options
        .par_iter()
        .map(|o| synth::run(o, &mut Silent))
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = Manifest::new("synth", argv, config.seed, crate::config_file::echo(&config));
    let mut csv = format!("{}\n", synth::CSV_HEADER);
    for o in &outcomes {
        csv.push_str(&synth::csv_row(o));
        csv.push('\n');
        let dir = a.out.join(format!("k{}_rho{}", o.spec.k_x, o.spec.rho));
        let (nx, ny) = (o.spec.n, o.spec.m);
        io::write_membership_csv(&dir.join("truth_x.csv"), &o.instance.groups_x)?;
        io::write_membership_csv(&dir.join("truth_y.csv"), &o.instance.groups_y)?;
        for (name, r) in [("llfmc", &o.llfmc), ("baseline", &o.baseline)] {
            io::write_membership_csv(&dir.join(format!("groups_x_{name}.csv")), &r.membership_x)?;
            io::write_membership_csv(&dir.join(format!("groups_y_{name}.csv")), &r.membership_y)?;
            io::write_indicator_csv(&dir.join(format!("s_x_{name}.csv")), nx, &o.similarity_x(r))?;
            io::write_indicator_csv(&dir.join(format!("s_y_{name}.csv")), ny, &o.similarity_y(r))?;
        }
        println!(
            "k={} rho={} ({}): RelErr llfmc {:.4} baseline {:.4}, agreement x {:.4} vs {:.4}",
            o.spec.k_x,
            o.spec.rho,
            o.label(),
            o.llfmc.rel_err,
            o.baseline.rel_err,
            o.llfmc.agreement_x,
            o.baseline.agreement_x
        );
    }
    let csv_path = a.out.join("synth.csv");
    io::write_string(&csv_path, &csv)?;
    manifest.outputs.push(csv_path);
    manifest.write(&a.out)?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, argv: Vec<String>) -> Result<()> {
    let config = a.run.resolve(RunConfig::default())?;
    let grid = if a.full_grid {
        Grid::full()
    } else {
        let or_current = |v: &Vec<f64>, current: f64| if v.is_empty() { vec![current] } else { v.clone() };
        Grid {
            gamma_x: or_current(&a.gammas_x, config.gamma_x()),
            gamma_y: or_current(&a.gammas_y, config.gamma_y()),
            t: or_current(&a.ts, config.penalty_x.t),
        }
    };
    grid.validate()?;
    let mut manifest = Manifest::new("sweep", argv, config.seed, crate::config_file::echo(&config));
    data_inputs(&a.data, &mut manifest)?;
    graph_inputs(&a.graphs, &mut manifest)?;
    let data = load_dataset(&a.data, config.seed)?;
    let (fit_part, val) = data.train.split_train_test(a.val_fraction, config.seed ^ 0x5eed)?;
    let plan = a.graphs.plan();
    let graphs = build_graphs(&fit_part, &plan, config.seed)?;
    log::info!("sweeping {} cells", grid.cells().len());
    let results = sweep::run_grid(&fit_part, &val, &graphs, plan.refine_k, &config, &grid)?;
    io::write_string(&a.out.join("sweep.csv"), &sweep::to_csv(&results))?;

    let best = sweep::best(&results).expect("run_grid returns a scored cell").clone();
    let baseline = sweep::best_baseline(&results).cloned();
    // refit the chosen cell on all training data; the test set is scored once
    let best_config = best.cell.apply(&config);
    let full_graphs = build_graphs(&data.train, &plan, config.seed)?;
    let final_fit = fit(&data.train, &full_graphs, plan.refine_k, &best_config, &mut Silent)?;
    let test_rmse = data
        .test
        .as_ref()
        .map(|t| rmse_on(&final_fit.solution.factors, t))
        .transpose()?;
    write_factors(&a.out, &final_fit.solution.factors)?;
    write_json(
        &a.out.join("best.json"),
        &json!({
            "cell": best.cell,
            "validation_rmse": best.rmse,
            "test_rmse": test_rmse,
            "baseline_cell": baseline.as_ref().map(|b| b.cell),
            "baseline_validation_rmse": baseline.as_ref().and_then(|b| b.rmse),
        }),
    )?;
    manifest.write(&a.out)?;

    println!(
        "best cell gamma_x={} gamma_y={} t={}: validation RMSE {:.4}",
        best.cell.gamma_x,
        best.cell.gamma_y,
        best.cell.t,
        best.rmse.unwrap()
    );
    if let Some(b) = baseline.and_then(|b| b.rmse) {
        println!("baseline (gamma = 0) validation RMSE {b:.4}");
    }
    if let Some(r) = test_rmse {
        println!("test RMSE of the selected cell {r:.4}");
    }
    Ok(())
}

fn cmd_graph_build(a: &GraphBuildArgs, argv: Vec<String>) -> Result<()> {
    let mut manifest = Manifest::new("graph-build", argv, a.seed, String::new());
    manifest.add_input(&a.data)?;
    let (m, _) = load_one(&a.data, a.format)?;
    for (side, name) in [(Side::Rows, "graph_x.csv"), (Side::Cols, "graph_y.csv")] {
        let source = if side == Side::Rows { m.clone() } else { m.transpose() };
        let raw = crate::pipeline::knn_graph(&source, a.distance, a.k, a.weighting)?;
        let g = if a.keep_cycles {
            raw
        } else {
            crate::pipeline::build_graph(
                &m,
                side,
                &GraphSource::Knn {
                    distance: a.distance,
                    k: a.k,
                    weighting: a.weighting,
                },
                a.seed,
            )?
        };
        io::write_graph_csv(&a.out.join(name), &g)?;
        println!("{name}: {} nodes, {} edges", g.n_nodes(), g.n_edges());
    }
    manifest.write(&a.out)?;
    Ok(())
}

fn threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
    }
}

fn dispatch(cli: &Cli, argv: Vec<String>) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, argv),
        Command::Evaluate(a) => cmd_evaluate(a, argv),
        Command::Synth(a) => cmd_synth(a, argv),
        Command::Sweep(a) => cmd_sweep(a, argv),
        Command::GraphBuild(a) => cmd_graph_build(a, argv),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 2 configuration, 3 data, 4 divergence.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = threads().and_then(|n| match n {
        None => dispatch(&cli, argv),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| dispatch(&cli, argv)),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
