//! Named experiment scenarios, their parameter grids and CSV output.
//!
//! Each scenario expands into jobs (grid point x policy x engine). Jobs run in
//! parallel and rows are assembled in grid order, then policy, then replica,
//! so output depends only on the experiment settings.

mod config;
mod rows;
mod table1;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

pub use config::{load_config, parse_config};
pub use rows::{emit_csv, format_sig6, parse_csv, read_csv, write_csv, Engine, ResultRow, HEADER};
pub use table1::{
    table1_search, Evaluation, StopReason, Table1Result, WaitEstimate, BRACKET_FACTOR,
    BRACKET_TOLERANCE,
};

use crate::counts::{run_replicas, PolicyKind};
use crate::ctmc::{
    expected_chain_length_hat, expected_chain_length_stationary, solve_stationary, CtmcKind,
    PolicyRates, SolveMethod, TruncationSpec,
};
use crate::error::{Error, Result};
use crate::graph::{run_graph_replicas, GraphConfig, GraphPolicy};
use crate::params::{MarketParams, RunControls, SimSummary};
use crate::theory::{
    bound_chain, bounds_bilateral_e, heuristic_chain_constant, limit_bilateral_h, merge_gain,
    MergeChange,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentName {
    Priorities,
    Merging,
    ChainStatics,
    MaxVsLocal,
    ChainsVsBilateral,
    Table1Search,
    HeuristicTightness,
    SolverVsSim,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 8] = [
        ExperimentName::Priorities,
        ExperimentName::Merging,
        ExperimentName::ChainStatics,
        ExperimentName::MaxVsLocal,
        ExperimentName::ChainsVsBilateral,
        ExperimentName::Table1Search,
        ExperimentName::HeuristicTightness,
        ExperimentName::SolverVsSim,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentName::Priorities => "priorities",
            ExperimentName::Merging => "merging",
            ExperimentName::ChainStatics => "chain-statics",
            ExperimentName::MaxVsLocal => "max-vs-local",
            ExperimentName::ChainsVsBilateral => "chains-vs-bilateral",
            ExperimentName::Table1Search => "table1-search",
            ExperimentName::HeuristicTightness => "heuristic-tightness",
            ExperimentName::SolverVsSim => "solver-vs-sim",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Lists of values per parameter; the grid is their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub lambda_h: Vec<f64>,
    pub lambda_e: Vec<f64>,
    pub p_h: Vec<f64>,
    pub p_e: Vec<f64>,
    pub d: Vec<u32>,
}

/// One grid point; `d_index` is the position of `d` in its list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda_h: f64,
    pub lambda_e: f64,
    pub p_h: f64,
    pub p_e: f64,
    pub d: u32,
    pub d_index: usize,
}

impl GridPoint {
    pub fn params(&self) -> Result<MarketParams> {
        MarketParams::new(self.lambda_h, self.lambda_e, self.p_h, self.p_e, self.d)
    }
}

impl ParamGrid {
    fn new(lambda_h: &[f64], lambda_e: &[f64], p_h: &[f64], p_e: &[f64], d: &[u32]) -> Self {
        Self {
            lambda_h: lambda_h.to_vec(),
            lambda_e: lambda_e.to_vec(),
            p_h: p_h.to_vec(),
            p_e: p_e.to_vec(),
            d: d.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.lambda_h.len() * self.lambda_e.len() * self.p_h.len() * self.p_e.len() * self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points with `lambda_h` varying slowest and `d` fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &lambda_h in &self.lambda_h {
            for &lambda_e in &self.lambda_e {
                for &p_h in &self.p_h {
                    for &p_e in &self.p_e {
                        for (d_index, &d) in self.d.iter().enumerate() {
                            out.push(GridPoint {
                                lambda_h,
                                lambda_e,
                                p_h,
                                p_e,
                                d,
                                d_index,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub grid: ParamGrid,
    pub rc: RunControls,
    pub out: Option<PathBuf>,
    /// First market of the merging scenario; the grid holds the second.
    pub base_lambda_h: f64,
    pub base_lambda_e: f64,
}

impl ExperimentSpec {
    /// Default grid and run length of each scenario.
    pub fn preset(name: ExperimentName) -> Self {
        let halves = |n: usize| (1..=n).map(|i| 0.5 * i as f64).collect::<Vec<_>>();
        let (grid, arrivals, replicas) = match name {
            ExperimentName::Priorities => (
                ParamGrid::new(
                    &[1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0],
                    &[5.0],
                    &[0.002],
                    &[0.5],
                    &[1],
                ),
                2_000_000,
                1,
            ),
            ExperimentName::Merging => {
                let second: Vec<f64> = (0..=6).map(|i| 0.5 * i as f64).collect();
                (
                    ParamGrid::new(&second, &second, &[0.02], &[0.5], &[1]),
                    100_000,
                    1,
                )
            }
            ExperimentName::ChainStatics => (
                ParamGrid::new(&[2.0], &halves(8), &[0.02], &[0.5], &[1, 2, 3, 5, 10]),
                100_000,
                1,
            ),
            ExperimentName::MaxVsLocal => (
                ParamGrid::new(&halves(8), &[2.0], &[0.002], &[0.5], &[1]),
                100_000,
                1,
            ),
            ExperimentName::ChainsVsBilateral => {
                let lh: Vec<f64> = (1..=10).map(f64::from).collect();
                (
                    ParamGrid::new(&lh, &[5.0], &[0.02], &[0.5], &[1, 20]),
                    2_000_000,
                    1,
                )
            }
            ExperimentName::Table1Search => (
                ParamGrid::new(
                    &[1.0],
                    &[2.0],
                    &[0.02],
                    &[0.1, 0.3, 0.5, 0.9, 1.0],
                    &[1, 10, 50],
                ),
                1_000_000,
                1,
            ),
            ExperimentName::HeuristicTightness => (
                ParamGrid::new(
                    &[0.5, 1.0, 2.0, 3.0, 4.0],
                    &[2.0, 3.0, 5.0],
                    &[0.002],
                    &[0.5],
                    &[1],
                ),
                100_000,
                1,
            ),
            ExperimentName::SolverVsSim => (
                ParamGrid::new(&[1.0], &[2.0], &[0.05], &[0.5], &[1]),
                1_000_000,
                4,
            ),
        };
        Self {
            name,
            grid,
            rc: RunControls {
                replicas,
                ..RunControls::new(arrivals, 1)
            },
            out: None,
            base_lambda_h: 1.0,
            base_lambda_e: 1.3,
        }
    }

    /// Same scenario with a twentieth of the arrivals.
    pub fn quick(mut self) -> Self {
        self.rc.arrivals = (self.rc.arrivals / 20).max(2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParams("parameter grid is empty".into()));
        }
        self.rc.validate()?;
        for point in self.grid.points() {
            match self.name {
                ExperimentName::Merging => {
                    self.base_params(&point)?;
                    if point.lambda_h < 0.0 || point.lambda_e < 0.0 {
                        return Err(Error::InvalidParams(
                            "second-market rates must be >= 0".into(),
                        ));
                    }
                }
                _ => {
                    point.params()?;
                }
            }
        }
        Ok(())
    }

    fn base_params(&self, point: &GridPoint) -> Result<MarketParams> {
        MarketParams::new(
            self.base_lambda_h,
            self.base_lambda_e,
            point.p_h,
            point.p_e,
            point.d,
        )
    }
}

/// What a job computes.
#[derive(Debug, Clone, Copy)]
enum Task {
    Counts(PolicyKind),
    Graph(GraphPolicy),
    Ctmc(PolicyKind),
    Merge,
    Table1,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    point: GridPoint,
    task: Task,
}

fn policies(name: ExperimentName, point: &GridPoint) -> Vec<Task> {
    use PolicyKind::*;
    let first_d = point.d_index == 0;
    let mut out = Vec::new();
    match name {
        ExperimentName::Priorities => {
            if first_d {
                out.extend([Task::Counts(BilateralH), Task::Counts(BilateralE)]);
            }
        }
        ExperimentName::Merging => {
            if first_d {
                out.push(Task::Merge);
            }
        }
        ExperimentName::ChainStatics => out.push(Task::Counts(Chain)),
        ExperimentName::MaxVsLocal => out.extend([
            Task::Graph(GraphPolicy::Chain),
            Task::Graph(GraphPolicy::ChainMax),
        ]),
        ExperimentName::ChainsVsBilateral => {
            if first_d {
                out.push(Task::Counts(BilateralH));
            }
            out.push(Task::Counts(Chain));
        }
        ExperimentName::Table1Search => out.push(Task::Table1),
        ExperimentName::HeuristicTightness => {
            if first_d {
                out.push(Task::Counts(BilateralE));
            }
            out.push(Task::Counts(Chain));
        }
        ExperimentName::SolverVsSim => {
            for policy in [BilateralH, BilateralE, Chain, ChainHat, BilateralETilde] {
                out.push(Task::Counts(policy));
                if let Some(g) = graph_policy(policy) {
                    out.push(Task::Graph(g));
                }
                out.push(Task::Ctmc(policy));
            }
        }
    }
    out
}

fn graph_policy(policy: PolicyKind) -> Option<GraphPolicy> {
    match policy {
        PolicyKind::BilateralH => Some(GraphPolicy::BilateralH),
        PolicyKind::BilateralE => Some(GraphPolicy::BilateralE),
        PolicyKind::Chain => Some(GraphPolicy::Chain),
        PolicyKind::ChainHat => Some(GraphPolicy::ChainHat),
        PolicyKind::BilateralETilde => None,
    }
}

fn ctmc_kind(policy: PolicyKind) -> CtmcKind {
    match policy {
        PolicyKind::BilateralH => CtmcKind::BilateralH,
        PolicyKind::BilateralE => CtmcKind::BilateralE,
        PolicyKind::Chain => CtmcKind::Chain,
        PolicyKind::ChainHat => CtmcKind::ChainHat,
        PolicyKind::BilateralETilde => CtmcKind::BilateralETilde,
    }
}

/// Theory constant attached to a row. Bilateral-E and chain rows carry the
/// proved upper bound, except in the heuristic scenario where they carry the
/// heuristic guess.
pub fn theory_value(name: ExperimentName, policy: &str, p: &MarketParams) -> Option<f64> {
    let heuristic = name == ExperimentName::HeuristicTightness;
    match policy {
        "B_H" => limit_bilateral_h(p).ok().map(|r| r.constant),
        "B_E" => bounds_bilateral_e(p).ok().map(|b| {
            if heuristic {
                b.heuristic.constant
            } else {
                b.upper.constant
            }
        }),
        "C" | "C_max" if heuristic => heuristic_chain_constant(p).ok().map(|r| r.constant),
        "C" | "C_max" | "C_hat" => bound_chain(p).ok().map(|r| r.constant),
        _ => None,
    }
}

struct RowBase<'a> {
    spec: &'a ExperimentSpec,
}

impl RowBase<'_> {
    fn row(
        &self,
        policy: &str,
        d: u32,
        engine: Engine,
        s: &SimSummary,
        p: &MarketParams,
    ) -> ResultRow {
        ResultRow {
            experiment: self.spec.name.name().to_string(),
            policy: policy.to_string(),
            lambda_h: p.lambda_h,
            lambda_e: p.lambda_e,
            p_h: p.p_h,
            p_e: p.p_e,
            d,
            arrivals: self.spec.rc.arrivals,
            seed: self.spec.rc.seed,
            mean_h: s.mean_h,
            mean_e: s.mean_e,
            w_h: s.w_h,
            w_e: s.w_e,
            chain_len: s.chain_len_mean_given_positive,
            ci_half_width: Some(s.ci_half_width_h),
            theory_value: theory_value(self.spec.name, policy, p),
            engine,
        }
    }
}

fn d_column(policy: PolicyKind, d: u32) -> u32 {
    if policy.is_chain() {
        d
    } else {
        0
    }
}

fn graph_config() -> GraphConfig {
    GraphConfig {
        check_invariants: false,
        ..GraphConfig::default()
    }
}

fn run_job(spec: &ExperimentSpec, job: &Job, standalone: &[SimSummary]) -> Result<Vec<ResultRow>> {
    let base = RowBase { spec };
    let rc = &spec.rc;
    match job.task {
        Task::Counts(policy) => {
            let p = job.point.params()?;
            let runs = run_replicas(policy, &p, rc)?;
            Ok(runs
                .iter()
                .map(|s| base.row(policy.name(), d_column(policy, p.d), Engine::Counts, s, &p))
                .collect())
        }
        Task::Graph(policy) => {
            let p = job.point.params()?;
            let runs = run_graph_replicas(policy, &p, rc, &graph_config())?;
            let d = if matches!(policy, GraphPolicy::BilateralH | GraphPolicy::BilateralE) {
                0
            } else {
                p.d
            };
            Ok(runs
                .iter()
                .map(|g| base.row(policy.name(), d, Engine::Graph, &g.summary, &p))
                .collect())
        }
        Task::Ctmc(policy) => {
            let p = job.point.params()?;
            let kind = ctmc_kind(policy);
            let pi = solve_stationary(
                &PolicyRates::new(kind, p),
                TruncationSpec::default_for(kind, &p),
                SolveMethod::Direct,
            )?;
            let chain_len = match policy {
                PolicyKind::Chain => Some(expected_chain_length_stationary(&p, None)?),
                PolicyKind::ChainHat => Some(expected_chain_length_hat(&p, None)?),
                _ => None,
            };
            let (mean_h, mean_e) = (pi.mean_h(), pi.mean_e());
            let s = SimSummary {
                mean_h,
                mean_e,
                w_h: mean_h / p.lambda_h,
                w_e: if p.lambda_e > 0.0 {
                    mean_e / p.lambda_e
                } else {
                    0.0
                },
                chain_len_mean_given_positive: chain_len,
                ci_half_width_h: 0.0,
                se_mean_h: 0.0,
                se_mean_e: 0.0,
                samples: 0,
            };
            let mut row = base.row(policy.name(), d_column(policy, p.d), Engine::Ctmc, &s, &p);
            row.arrivals = 0;
            row.seed = 0;
            row.ci_half_width = None;
            Ok(vec![row])
        }
        Task::Merge => {
            let first = spec.base_params(&job.point)?;
            let (lh2, le2) = (job.point.lambda_h, job.point.lambda_e);
            let merged = MarketParams {
                lambda_h: first.lambda_h + lh2,
                lambda_e: first.lambda_e + le2,
                ..first
            };
            let runs = run_replicas(PolicyKind::BilateralH, &merged, rc)?;
            let theory = match merge_gain(&first, lh2, le2).map(|m| m.change) {
                Ok(MergeChange::Delta(delta)) => Some(delta),
                _ => None,
            };
            Ok(runs
                .iter()
                .zip(standalone)
                .map(|(m, s)| {
                    let mut row = base.row("B_H", 0, Engine::Counts, m, &merged);
                    row.lambda_h = lh2;
                    row.lambda_e = le2;
                    row.w_h = m.w_h - s.w_h;
                    row.w_e = m.w_e - s.w_e;
                    row.ci_half_width = Some(m.ci_half_width_h.hypot(s.ci_half_width_h));
                    row.theory_value = theory;
                    row
                })
                .collect())
        }
        Task::Table1 => {
            let pt = job.point;
            let res = table1_search(pt.lambda_h, pt.lambda_e, pt.p_h, pt.p_e, pt.d, rc)?;
            let chain_p = pt.params()?;
            let bilateral_p = MarketParams {
                lambda_e: res.lambda_e2,
                d: 1,
                ..chain_p
            };
            let mut rows: Vec<ResultRow> = res
                .chain
                .replicas
                .iter()
                .map(|s| base.row("C", pt.d, Engine::Counts, s, &chain_p))
                .collect();
            for s in &res.bilateral.replicas {
                let mut row = base.row("B_H", pt.d, Engine::Counts, s, &bilateral_p);
                row.theory_value = Some(res.threshold);
                rows.push(row);
            }
            Ok(rows)
        }
    }
}

/// Run the jobs of `spec` and return the rows of every job before the first
/// failing one, together with that failure.
pub fn run_partial(spec: &ExperimentSpec) -> (Vec<ResultRow>, Option<Error>) {
    if let Err(e) = spec.validate() {
        return (Vec::new(), Some(e));
    }
    let jobs: Vec<Job> = spec
        .grid
        .points()
        .into_iter()
        .flat_map(|point| {
            policies(spec.name, &point)
                .into_iter()
                .map(move |task| Job { point, task })
        })
        .collect();
    let standalone = if spec.name == ExperimentName::Merging {
        let first = match spec.base_params(&spec.grid.points()[0]) {
            Ok(p) => p,
            Err(e) => return (Vec::new(), Some(e)),
        };
        match run_replicas(PolicyKind::BilateralH, &first, &spec.rc) {
            Ok(s) => s,
            Err(e) => return (Vec::new(), Some(e)),
        }
    } else {
        Vec::new()
    };
    let results: Vec<Result<Vec<ResultRow>>> = jobs
        .par_iter()
        .map(|job| run_job(spec, job, &standalone))
        .collect();
    let mut rows = Vec::new();
    for r in results {
        match r {
            Ok(mut chunk) => rows.append(&mut chunk),
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    match run_partial(spec) {
        (rows, None) => Ok(rows),
        (_, Some(e)) => Err(e),
    }
}

/// Run `spec` and write its rows to `path`. On failure the rows completed
/// before the failing job are still written.
pub fn run_experiment_to_csv(spec: &ExperimentSpec, path: &Path) -> Result<Vec<ResultRow>> {
    let (rows, err) = run_partial(spec);
    emit_csv(&rows, path)?;
    match err {
        None => Ok(rows),
        Some(e) => Err(e),
    }
}
