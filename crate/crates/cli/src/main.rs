use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetmatch_core::counts::{run_coupled_bilateral_e, run_coupled_chain, run_replicas, PolicyKind};
use hetmatch_core::ctmc::{
    expected_chain_length_hat, expected_chain_length_stationary, solve_stationary, CtmcKind,
    PolicyRates, SolveMethod, TruncationSpec,
};
use hetmatch_core::experiments::{
    load_config, theory_value, write_csv, Engine, ExperimentName, ExperimentSpec, ResultRow,
};
use hetmatch_core::graph::{run_graph_replicas, GraphConfig, GraphPolicy};
use hetmatch_core::theory::{
    bound_chain, bounds_bilateral_e, chain_length_limit, competing_rate_threshold, critical_ratio,
    heuristic_chain_constant, limit_bilateral_h, LimitResult,
};
use hetmatch_core::{Error, MarketParams, Result, RunControls, SimSummary};

/// Simulate and analyse dynamic matching markets with hard- and
/// easy-to-match agents.
#[derive(Parser)]
#[command(name = "hetmatch", version)]
struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Arrival epochs per replica.
    #[arg(long, global = true)]
    arrivals: Option<u64>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Divide the number of arrivals by 20.
    #[arg(long, global = true)]
    quick: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy at one parameter point.
    Simulate {
        #[command(flatten)]
        market: Market,
        /// B_H, B_E, C, C_hat, B_E_tilde or C_max.
        #[arg(long, default_value = "B_H")]
        policy: String,
        #[arg(long, value_enum, default_value = "counts")]
        engine: SimEngine,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
    },
    /// Solve the truncated continuous-time chain of one policy.
    Solve {
        #[command(flatten)]
        market: Market,
        #[arg(long, default_value = "B_H")]
        policy: String,
        #[arg(long)]
        h_max: Option<usize>,
        #[arg(long)]
        e_max: Option<usize>,
        /// Use uniformized power iteration instead of direct elimination.
        #[arg(long)]
        power: bool,
    },
    /// Print limit constants and bounds.
    Theory {
        #[command(flatten)]
        market: Market,
    },
    /// Run a named experiment.
    Experiment {
        /// Scenario name; may be omitted when the config file names one.
        name: Option<String>,
    },
    /// Check a pathwise coupling over several seeds.
    Couple {
        #[arg(value_enum)]
        kind: CoupleKind,
        #[command(flatten)]
        market: Market,
        /// Number of seeds, starting at the base seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

#[derive(Args)]
struct Market {
    #[arg(long, default_value_t = 1.0)]
    lambda_h: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda_e: f64,
    #[arg(long, default_value_t = 0.02)]
    p_h: f64,
    #[arg(long, default_value_t = 0.5)]
    p_e: f64,
    #[arg(long, default_value_t = 1)]
    d: u32,
}

impl Market {
    fn params(&self) -> Result<MarketParams> {
        MarketParams::new(self.lambda_h, self.lambda_e, self.p_h, self.p_e, self.d)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimEngine {
    Counts,
    Graph,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoupleKind {
    Chain,
    BilateralE,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_controls(cli: &Cli, replicas: usize) -> RunControls {
    let mut rc = RunControls {
        replicas,
        ..RunControls::default()
    };
    if let Some(seed) = cli.seed {
        rc.seed = seed;
    }
    if let Some(n) = cli.arrivals {
        rc.arrivals = n;
    }
    if cli.quick {
        rc.arrivals /= 20;
    }
    rc
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate {
            market,
            policy,
            engine,
            replicas,
        } => {
            let rows = simulate(cli, market, policy, *engine, *replicas)?;
            output(cli, &rows)
        }
        Command::Solve {
            market,
            policy,
            h_max,
            e_max,
            power,
        } => solve(market, policy, *h_max, *e_max, *power),
        Command::Theory { market } => theory(market),
        Command::Experiment { name } => experiment(cli, name.as_deref()),
        Command::Couple {
            kind,
            market,
            seeds,
        } => couple(cli, *kind, market, *seeds),
    }
}

fn output(cli: &Cli, rows: &[ResultRow]) -> Result<()> {
    match &cli.out {
        Some(path) => hetmatch_core::experiments::emit_csv(rows, path),
        None => write_csv(rows, io::stdout().lock()),
    }
}

fn graph_policy(name: &str) -> Result<GraphPolicy> {
    if name.eq_ignore_ascii_case("c_max") || name.eq_ignore_ascii_case("chain_max") {
        return Ok(GraphPolicy::ChainMax);
    }
    match name.parse::<PolicyKind>()? {
        PolicyKind::BilateralH => Ok(GraphPolicy::BilateralH),
        PolicyKind::BilateralE => Ok(GraphPolicy::BilateralE),
        PolicyKind::Chain => Ok(GraphPolicy::Chain),
        PolicyKind::ChainHat => Ok(GraphPolicy::ChainHat),
        PolicyKind::BilateralETilde => Err(Error::InvalidParams(
            "B_E_tilde has no graph-engine counterpart".into(),
        )),
    }
}

fn simulate(
    cli: &Cli,
    market: &Market,
    policy: &str,
    engine: SimEngine,
    replicas: usize,
) -> Result<Vec<ResultRow>> {
    let p = market.params()?;
    let rc = run_controls(cli, replicas);
    let (name, engine, runs): (&str, Engine, Vec<SimSummary>) = match engine {
        SimEngine::Counts => {
            let kind: PolicyKind = policy.parse()?;
            (kind.name(), Engine::Counts, run_replicas(kind, &p, &rc)?)
        }
        SimEngine::Graph => {
            let g = graph_policy(policy)?;
            let runs = run_graph_replicas(g, &p, &rc, &GraphConfig::default())?;
            (
                g.name(),
                Engine::Graph,
                runs.into_iter().map(|r| r.summary).collect(),
            )
        }
    };
    let bilateral = matches!(name, "B_H" | "B_E" | "B_E_tilde");
    Ok(runs
        .iter()
        .map(|s| ResultRow {
            experiment: "simulate".into(),
            policy: name.into(),
            lambda_h: p.lambda_h,
            lambda_e: p.lambda_e,
            p_h: p.p_h,
            p_e: p.p_e,
            d: if bilateral { 0 } else { p.d },
            arrivals: rc.arrivals,
            seed: rc.seed,
            mean_h: s.mean_h,
            mean_e: s.mean_e,
            w_h: s.w_h,
            w_e: s.w_e,
            chain_len: s.chain_len_mean_given_positive,
            ci_half_width: Some(s.ci_half_width_h),
            theory_value: theory_value(ExperimentName::SolverVsSim, name, &p),
            engine,
        })
        .collect())
}

fn solve(
    market: &Market,
    policy: &str,
    h_max: Option<usize>,
    e_max: Option<usize>,
    power: bool,
) -> Result<()> {
    let p = market.params()?;
    let policy: PolicyKind = policy.parse()?;
    let kind = match policy {
        PolicyKind::BilateralH => CtmcKind::BilateralH,
        PolicyKind::BilateralE => CtmcKind::BilateralE,
        PolicyKind::Chain => CtmcKind::Chain,
        PolicyKind::ChainHat => CtmcKind::ChainHat,
        PolicyKind::BilateralETilde => CtmcKind::BilateralETilde,
    };
    let mut trunc = TruncationSpec::default_for(kind, &p);
    if let Some(h) = h_max {
        trunc.h_max = h;
    }
    if let Some(e) = e_max {
        trunc.e_max = e;
    }
    let method = if power {
        SolveMethod::Power
    } else {
        SolveMethod::Direct
    };
    let pi = solve_stationary(&PolicyRates::new(kind, p), trunc, method)?;
    println!("policy = {policy}");
    println!("h_max = {}", pi.trunc.h_max);
    println!("e_max = {}", pi.trunc.e_max);
    println!("mean_h = {}", pi.mean_h());
    println!("mean_e = {}", pi.mean_e());
    println!("w_h = {}", pi.mean_h() / p.lambda_h);
    if p.lambda_e > 0.0 {
        println!("w_e = {}", pi.mean_e() / p.lambda_e);
    }
    match policy {
        PolicyKind::Chain => {
            println!(
                "chain_len = {}",
                expected_chain_length_stationary(&p, Some(trunc))?
            );
        }
        PolicyKind::ChainHat => {
            println!(
                "chain_len = {}",
                expected_chain_length_hat(&p, Some(trunc))?
            );
        }
        _ => {}
    }
    println!("residual = {:e}", pi.residual);
    println!("boundary_mass = {:e}", pi.boundary_mass);
    Ok(())
}

fn theory(market: &Market) -> Result<()> {
    let p = market.params()?;
    let line = |label: &str, r: Result<LimitResult>| match r {
        Ok(r) => println!(
            "{label} = {} ({:?}, {:?}; predicted w_h = {})",
            r.constant,
            r.kind,
            r.scaling,
            r.predicted_w_h(p.p_h)
        ),
        Err(e) => println!("{label}: {e}"),
    };
    line("B_H", limit_bilateral_h(&p));
    match bounds_bilateral_e(&p) {
        Ok(b) => {
            line("B_E lower", Ok(b.lower));
            line("B_E upper", Ok(b.upper));
            line("B_E heuristic", Ok(b.heuristic));
        }
        Err(e) => line("B_E", Err(e)),
    }
    line("C bound", bound_chain(&p));
    line("C heuristic", heuristic_chain_constant(&p));
    match chain_length_limit(&p) {
        Ok(v) => println!("chain length limit = {v}"),
        Err(e) => println!("chain length limit: {e}"),
    }
    match competing_rate_threshold(p.lambda_h, p.lambda_e, p.p_e, p.d) {
        Ok(v) => println!("competing rate threshold = {v}"),
        Err(e) => println!("competing rate threshold: {e}"),
    }
    println!("critical ratio = {}", critical_ratio());
    Ok(())
}

fn experiment(cli: &Cli, name: Option<&str>) -> Result<()> {
    let mut spec = match (&cli.config, name) {
        (Some(path), name) => {
            let spec = load_config(path)?;
            if let Some(n) = name {
                let n: ExperimentName = n.parse()?;
                if n != spec.name {
                    return Err(Error::Config {
                        line: 0,
                        msg: format!("config names `{}` but `{n}` was requested", spec.name),
                    });
                }
            }
            spec
        }
        (None, Some(n)) => ExperimentSpec::preset(n.parse()?),
        (None, None) => {
            return Err(Error::InvalidParams(
                "experiment name or --config is required".into(),
            ))
        }
    };
    if let Some(seed) = cli.seed {
        spec.rc.seed = seed;
    }
    if let Some(n) = cli.arrivals {
        spec.rc.arrivals = n;
    }
    if cli.quick {
        spec = spec.quick();
    }
    if let Some(out) = &cli.out {
        spec.out = Some(out.clone());
    }
    match spec.out.clone() {
        Some(path) => hetmatch_core::experiments::run_experiment_to_csv(&spec, &path).map(|_| ()),
        None => {
            let rows = hetmatch_core::experiments::run_experiment(&spec)?;
            write_csv(&rows, io::stdout().lock())
        }
    }
}

fn couple(cli: &Cli, kind: CoupleKind, market: &Market, seeds: u64) -> Result<()> {
    let p = market.params()?;
    let rc = run_controls(cli, 1);
    rc.validate()?;
    println!("seed,violations,mean_h_full,mean_h_relative");
    let mut total = 0;
    for i in 0..seeds {
        let rc = RunControls {
            seed: rc.seed.wrapping_add(i),
            ..rc
        };
        let trace = match kind {
            CoupleKind::Chain => run_coupled_chain(&p, &rc, 0)?,
            CoupleKind::BilateralE => run_coupled_bilateral_e(&p, &rc, 0)?,
        };
        let (full, relative) = trace.marginal_h(rc.warmup_fraction)?;
        total += trace.violation_count;
        println!(
            "{},{},{},{}",
            rc.seed, trace.violation_count, full.mean, relative.mean
        );
    }
    if total > 0 {
        return Err(Error::Invariant(format!("{total} dominance violations")));
    }
    Ok(())
}
