//! Replica loop of the graph simulator.

use rand::Rng;
use rayon::prelude::*;

use super::search::{
    find_bilateral_partner, find_chain_local, find_chain_max, ChainPath, Priority,
    DEFAULT_SEARCH_BUDGET,
};
use super::{AgentId, CompatibilityGraph};
use crate::counts::{AgentType, EpochAverager, Outcome, StepEvent};
use crate::error::{Error, Result};
use crate::params::{replica_rng, CountsState, MarketParams, RunControls, SimSummary};
use crate::stats::{batch_estimate, DEFAULT_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphPolicy {
    BilateralH,
    BilateralE,
    /// Local-search chains.
    Chain,
    /// Local-search chains where unmatched E arrivals leave.
    ChainHat,
    /// Exact Max-Chains search.
    ChainMax,
}

impl GraphPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            GraphPolicy::BilateralH => "B_H",
            GraphPolicy::BilateralE => "B_E",
            GraphPolicy::Chain => "C",
            GraphPolicy::ChainHat => "C_hat",
            GraphPolicy::ChainMax => "C_max",
        }
    }

    fn is_chain(&self) -> bool {
        !matches!(self, GraphPolicy::BilateralH | GraphPolicy::BilateralE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphConfig {
    /// Node-expansion cap of each Max-Chains search.
    pub search_budget: u64,
    /// Under Max-Chains, also run local search on the same graph and count
    /// epochs where it would have matched more H agents.
    pub compare_local: bool,
    /// Check the structural invariants after every epoch.
    pub check_invariants: bool,
    /// Keep a ledger of sampled pairs; memory grows with arrivals times pool size.
    pub audit_coins: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            search_budget: DEFAULT_SEARCH_BUDGET,
            compare_local: false,
            check_invariants: cfg!(debug_assertions),
            audit_coins: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSummary {
    /// Pool-size averages with Little's-law waiting times.
    pub summary: SimSummary,
    /// Mean H waiting time from per-agent epoch gaps; agents still waiting
    /// at the end count with their elapsed time.
    pub direct_w_h: f64,
    pub direct_w_h_se: f64,
    pub direct_w_e: f64,
    pub comparison_violations: u64,
    pub max_expansions: u64,
}

struct Run<'a> {
    g: CompatibilityGraph,
    p: &'a MarketParams,
    departure: Vec<u64>,
}

impl Run<'_> {
    fn leave(&mut self, id: AgentId, epoch: u64) {
        self.mark(id, epoch);
        self.g.depart(id);
    }

    fn mark(&mut self, id: AgentId, epoch: u64) {
        let i = id as usize;
        if self.departure.len() <= i {
            self.departure.resize(i + 1, u64::MAX);
        }
        self.departure[i] = epoch;
    }

    fn apply_segment(&mut self, path: &ChainPath, epoch: u64) {
        let bridge = path.bridge();
        self.g.depart(bridge);
        let receivers = &path.agents[1..];
        let (last, rest) = receivers.split_last().expect("segment has a receiver");
        for &a in rest {
            self.leave(a, epoch);
        }
        self.mark(*last, epoch);
        self.g.make_bridge(*last);
    }
}

/// Simulate one replica on the explicit graph.
pub fn run_graph_replica(
    policy: GraphPolicy,
    p: &MarketParams,
    rc: &RunControls,
    replica: u64,
    config: &GraphConfig,
) -> Result<GraphSummary> {
    p.validate()?;
    let mut avg = EpochAverager::new(rc)?;
    let mut rng = replica_rng(rc.seed, replica);
    let mut shadow = replica_rng(rc.seed ^ 0x5EED_5EED_5EED_5EED, replica);
    let altruists = if policy.is_chain() { p.d } else { 0 };
    let mut g = CompatibilityGraph::new(altruists);
    if config.audit_coins {
        g = g.with_coin_audit();
    }
    let mut run = Run {
        g,
        p,
        departure: Vec::new(),
    };
    let prob_h = p.prob_h();
    let mut violations = 0u64;
    let mut max_expansions = 0u64;
    for epoch in 0..rc.arrivals {
        let seen = CountsState::new(run.g.num_waiting_h() as u64, run.g.num_waiting_e() as u64);
        let arrival = if rng.gen::<f64>() < prob_h {
            AgentType::H
        } else {
            AgentType::E
        };
        let new = run.g.arrive(arrival, epoch, run.p, &mut rng)?;
        let mut ev = StepEvent {
            arrival,
            outcome: Outcome::Joined,
            chain_len: 0,
        };
        match policy {
            GraphPolicy::BilateralH | GraphPolicy::BilateralE => {
                let prio = if policy == GraphPolicy::BilateralH {
                    Priority::HFirst
                } else {
                    Priority::EFirst
                };
                if let Some(j) = find_bilateral_partner(&run.g, new, prio, &mut rng) {
                    ev.outcome = Outcome::Matched(run.g.kind(j));
                    run.leave(j, epoch);
                    run.leave(new, epoch);
                }
            }
            GraphPolicy::Chain | GraphPolicy::ChainHat | GraphPolicy::ChainMax => {
                let path = if policy == GraphPolicy::ChainMax {
                    let (path, expansions) = find_chain_max(&run.g, new, config.search_budget)?;
                    max_expansions = max_expansions.max(expansions);
                    if config.compare_local {
                        if let (Some(best), Some(local)) =
                            (&path, find_chain_local(&run.g, new, &mut shadow))
                        {
                            if local.h_count > best.h_count {
                                violations += 1;
                            }
                        }
                    }
                    path
                } else {
                    find_chain_local(&run.g, new, &mut rng)
                };
                match path {
                    Some(path) => {
                        ev.outcome = Outcome::Segment;
                        ev.chain_len = path.len() as u64;
                        run.apply_segment(&path, epoch);
                    }
                    None if policy == GraphPolicy::ChainHat && arrival == AgentType::E => {
                        ev.outcome = Outcome::Discarded;
                        run.leave(new, epoch);
                    }
                    None => {}
                }
            }
        }
        avg.observe(seen, &ev);
        if config.check_invariants {
            if policy.is_chain() {
                run.g.check_bridges_idle()?;
                if run.g.bridges().count() != p.d as usize {
                    return Err(Error::Invariant("bridge count changed".into()));
                }
            } else {
                run.g.check_no_two_cycles()?;
            }
        }
    }
    let summary = avg.summary(p, policy.is_chain())?;

    let warmup = rc.warmup_epochs();
    let unit = 1.0 / p.total_rate();
    let (mut waits_h, mut waits_e) = (Vec::new(), Vec::new());
    let first = altruists as usize;
    for id in first..run.departure.len().max(run.g.nodes.len()) {
        let a = run.g.agent(id as AgentId);
        if a.arrival_epoch < warmup {
            continue;
        }
        let end = run
            .departure
            .get(id)
            .copied()
            .filter(|&d| d != u64::MAX)
            .unwrap_or(rc.arrivals);
        let w = (end - a.arrival_epoch) as f64 * unit;
        match a.agent_type {
            AgentType::H => waits_h.push(w),
            AgentType::E => waits_e.push(w),
        }
    }
    let est_h = batch_estimate(&waits_h, DEFAULT_BATCHES)?;
    let direct_w_e = if waits_e.is_empty() {
        0.0
    } else {
        waits_e.iter().sum::<f64>() / waits_e.len() as f64
    };
    Ok(GraphSummary {
        summary,
        direct_w_h: est_h.mean,
        direct_w_h_se: est_h.se,
        direct_w_e,
        comparison_violations: violations,
        max_expansions,
    })
}

/// Run `rc.replicas` graph replicas in parallel, in replica order.
pub fn run_graph_replicas(
    policy: GraphPolicy,
    p: &MarketParams,
    rc: &RunControls,
    config: &GraphConfig,
) -> Result<Vec<GraphSummary>> {
    (0..rc.replicas as u64)
        .into_par_iter()
        .map(|i| run_graph_replica(policy, p, rc, i, config))
        .collect()
}
