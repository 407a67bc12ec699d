//! Count-level simulation of the embedded chain observed at arrival epochs.
//!
//! Only the number of waiting H and E agents matters for the dynamics, so a
//! step needs a handful of Bernoulli coins instead of a graph.
//!
//! ## Coin order
//!
//! Every step draws, in this order:
//!
//! 1. the arrival type (`u < lambda_h / (lambda_h + lambda_e)` means H);
//! 2. for bilateral policies, one match coin per partner type in priority
//!    order, stopping at the first success; for chain policies, the bridge
//!    coin, then one coin per segment extension: an H coin while H agents
//!    remain, and an E coin only when the H coin fails and `e > 0`.
//!
//! A coin with success probability `prob` succeeds when `u < prob` for a
//! uniform `u` in `[0, 1)`. Coins whose probability is structurally zero
//! (an empty pool) are not drawn. With `p_e = 1` this makes `Chain` and
//! `ChainHat` consume identical streams.

mod coupling;

pub use coupling::{run_coupled_bilateral_e, run_coupled_chain, CoupledTrace};

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::numeric::powu;
use crate::params::{little_law, replica_rng, CountsState, MarketParams, RunControls, SimSummary};
use crate::stats::{BatchMeans, DEFAULT_BATCHES, Z95};

/// Matching policy simulated by the count engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Bilateral matching that prefers H partners.
    BilateralH,
    /// Bilateral matching that prefers E partners.
    BilateralE,
    /// `d` chains advanced by greedy local search, H first.
    Chain,
    /// Chains where unmatched E arrivals leave immediately.
    ChainHat,
    /// Bilateral E-priority where unmatched E arrivals turn into H agents.
    BilateralETilde,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::BilateralH => "B_H",
            PolicyKind::BilateralE => "B_E",
            PolicyKind::Chain => "C",
            PolicyKind::ChainHat => "C_hat",
            PolicyKind::BilateralETilde => "B_E_tilde",
        }
    }

    pub fn is_chain(&self) -> bool {
        matches!(self, PolicyKind::Chain | PolicyKind::ChainHat)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match norm.as_str() {
            "b_h" | "bilateral_h" => PolicyKind::BilateralH,
            "b_e" | "bilateral_e" => PolicyKind::BilateralE,
            "c" | "chain" => PolicyKind::Chain,
            "c_hat" | "chain_hat" => PolicyKind::ChainHat,
            "b_e_tilde" | "bilateral_e_tilde" => PolicyKind::BilateralETilde,
            _ => return Err(crate::Error::InvalidParams(format!("unknown policy `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentType {
    H,
    E,
}

/// What happened at one arrival epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The arrival joined the pool.
    Joined,
    /// Bilateral match with a waiting agent of the given type.
    Matched(AgentType),
    /// A chain segment formed.
    Segment,
    /// An E arrival that left without matching.
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    pub arrival: AgentType,
    pub outcome: Outcome,
    /// Segment length including the arrival; zero when no segment formed.
    pub chain_len: u64,
}

/// Precomputed coin probabilities of one policy at one parameter point.
#[derive(Debug, Clone, Copy)]
pub struct CountsDynamics {
    pub policy: PolicyKind,
    prob_h: f64,
    /// `1 - p_h^2`: an H-H pair fails.
    q_hh: f64,
    /// `1 - p_h p_e`: an H-E pair fails.
    q_he: f64,
    /// `1 - p_e^2`: an E-E pair fails.
    q_ee: f64,
    q_h: f64,
    q_e: f64,
    bridge_h: f64,
    bridge_e: f64,
}

impl CountsDynamics {
    pub fn new(policy: PolicyKind, p: &MarketParams) -> Result<Self> {
        p.validate()?;
        let q_h = 1.0 - p.p_h;
        let q_e = 1.0 - p.p_e;
        Ok(Self {
            policy,
            prob_h: p.prob_h(),
            q_hh: 1.0 - p.p_h * p.p_h,
            q_he: 1.0 - p.p_h * p.p_e,
            q_ee: 1.0 - p.p_e * p.p_e,
            q_h,
            q_e,
            bridge_h: 1.0 - powu(q_h, p.d as usize),
            bridge_e: 1.0 - powu(q_e, p.d as usize),
        })
    }

    #[inline]
    fn arrival<R: Rng + ?Sized>(&self, rng: &mut R) -> AgentType {
        if rng.gen::<f64>() < self.prob_h {
            AgentType::H
        } else {
            AgentType::E
        }
    }

    /// Draw a coin that succeeds with probability `1 - q^n`; skipped when `n = 0`.
    #[inline]
    fn hit<R: Rng + ?Sized>(rng: &mut R, q: f64, n: u64) -> bool {
        n > 0 && rng.gen::<f64>() < 1.0 - powu(q, n as usize)
    }

    /// Advance one arrival epoch.
    pub fn step<R: Rng + ?Sized>(&self, s: CountsState, rng: &mut R) -> (CountsState, StepEvent) {
        let arrival = self.arrival(rng);
        self.step_given(s, arrival, rng)
    }

    /// Advance one epoch with a given arrival type.
    pub fn step_given<R: Rng + ?Sized>(
        &self,
        s: CountsState,
        arrival: AgentType,
        rng: &mut R,
    ) -> (CountsState, StepEvent) {
        match self.policy {
            PolicyKind::BilateralH => self.bilateral(s, arrival, false, rng),
            PolicyKind::BilateralE => self.bilateral(s, arrival, true, rng),
            PolicyKind::Chain => self.chain(s, arrival, false, rng),
            PolicyKind::ChainHat => self.chain(s, arrival, true, rng),
            PolicyKind::BilateralETilde => self.tilde(s, arrival, rng),
        }
    }

    fn bilateral<R: Rng + ?Sized>(
        &self,
        s: CountsState,
        arrival: AgentType,
        e_first: bool,
        rng: &mut R,
    ) -> (CountsState, StepEvent) {
        // Failure probabilities of a single pair with a waiting H / E agent.
        let (q_with_h, q_with_e) = match arrival {
            AgentType::H => (self.q_hh, self.q_he),
            AgentType::E => (self.q_he, self.q_ee),
        };
        let order = if e_first {
            [(AgentType::E, q_with_e, s.e), (AgentType::H, q_with_h, s.h)]
        } else {
            [(AgentType::H, q_with_h, s.h), (AgentType::E, q_with_e, s.e)]
        };
        for (partner, q, n) in order {
            if Self::hit(rng, q, n) {
                let next = match partner {
                    AgentType::H => CountsState::new(s.h - 1, s.e),
                    AgentType::E => CountsState::new(s.h, s.e - 1),
                };
                return (
                    next,
                    StepEvent {
                        arrival,
                        outcome: Outcome::Matched(partner),
                        chain_len: 0,
                    },
                );
            }
        }
        let next = match arrival {
            AgentType::H => CountsState::new(s.h + 1, s.e),
            AgentType::E => CountsState::new(s.h, s.e + 1),
        };
        (
            next,
            StepEvent {
                arrival,
                outcome: Outcome::Joined,
                chain_len: 0,
            },
        )
    }

    fn chain<R: Rng + ?Sized>(
        &self,
        s: CountsState,
        arrival: AgentType,
        hat: bool,
        rng: &mut R,
    ) -> (CountsState, StepEvent) {
        let bridge = match arrival {
            AgentType::H => self.bridge_h,
            AgentType::E => self.bridge_e,
        };
        if rng.gen::<f64>() >= bridge {
            return match (arrival, hat) {
                (AgentType::H, _) => (
                    CountsState::new(s.h + 1, s.e),
                    StepEvent {
                        arrival,
                        outcome: Outcome::Joined,
                        chain_len: 0,
                    },
                ),
                (AgentType::E, false) => (
                    CountsState::new(s.h, s.e + 1),
                    StepEvent {
                        arrival,
                        outcome: Outcome::Joined,
                        chain_len: 0,
                    },
                ),
                (AgentType::E, true) => (
                    s,
                    StepEvent {
                        arrival,
                        outcome: Outcome::Discarded,
                        chain_len: 0,
                    },
                ),
            };
        }
        let end = if hat {
            self.h_run(s, rng)
        } else {
            self.segment(s, rng)
        };
        let removed = (s.h - end.h) + (s.e - end.e);
        (
            end,
            StepEvent {
                arrival,
                outcome: Outcome::Segment,
                chain_len: removed + 1,
            },
        )
    }

    /// Extend a segment through H agents only; returns the remaining state.
    #[inline]
    pub(crate) fn h_run<R: Rng + ?Sized>(&self, mut s: CountsState, rng: &mut R) -> CountsState {
        while Self::hit(rng, self.q_h, s.h) {
            s.h -= 1;
        }
        s
    }

    /// Full local-search segment: H agents first, then an E agent, repeated.
    #[inline]
    pub(crate) fn segment<R: Rng + ?Sized>(&self, s: CountsState, rng: &mut R) -> CountsState {
        let s = self.h_run(s, rng);
        self.segment_after_h_run(s, rng)
    }

    /// Continue a segment whose current H run has already stopped.
    #[inline]
    pub(crate) fn segment_after_h_run<R: Rng + ?Sized>(
        &self,
        mut s: CountsState,
        rng: &mut R,
    ) -> CountsState {
        while Self::hit(rng, self.q_e, s.e) {
            s.e -= 1;
            s = self.h_run(s, rng);
        }
        s
    }

    fn tilde<R: Rng + ?Sized>(
        &self,
        s: CountsState,
        arrival: AgentType,
        rng: &mut R,
    ) -> (CountsState, StepEvent) {
        let q = match arrival {
            AgentType::H => self.q_hh,
            AgentType::E => self.q_he,
        };
        if Self::hit(rng, q, s.h) {
            (
                CountsState::new(s.h - 1, 0),
                StepEvent {
                    arrival,
                    outcome: Outcome::Matched(AgentType::H),
                    chain_len: 0,
                },
            )
        } else {
            (
                CountsState::new(s.h + 1, 0),
                StepEvent {
                    arrival,
                    outcome: Outcome::Joined,
                    chain_len: 0,
                },
            )
        }
    }

    pub(crate) fn q_hh(&self) -> f64 {
        self.q_hh
    }
    pub(crate) fn q_he(&self) -> f64 {
        self.q_he
    }
    pub(crate) fn q_ee(&self) -> f64 {
        self.q_ee
    }
    pub(crate) fn q_h(&self) -> f64 {
        self.q_h
    }
    pub(crate) fn bridge_prob(&self, t: AgentType) -> f64 {
        match t {
            AgentType::H => self.bridge_h,
            AgentType::E => self.bridge_e,
        }
    }
    pub(crate) fn arrival_type<R: Rng + ?Sized>(&self, rng: &mut R) -> AgentType {
        self.arrival(rng)
    }
}

pub fn step_bilateral_h<R: Rng + ?Sized>(
    s: CountsState,
    p: &MarketParams,
    rng: &mut R,
) -> Result<(CountsState, StepEvent)> {
    Ok(CountsDynamics::new(PolicyKind::BilateralH, p)?.step(s, rng))
}

pub fn step_bilateral_e<R: Rng + ?Sized>(
    s: CountsState,
    p: &MarketParams,
    rng: &mut R,
) -> Result<(CountsState, StepEvent)> {
    Ok(CountsDynamics::new(PolicyKind::BilateralE, p)?.step(s, rng))
}

pub fn step_chain<R: Rng + ?Sized>(
    s: CountsState,
    p: &MarketParams,
    rng: &mut R,
) -> Result<(CountsState, StepEvent)> {
    Ok(CountsDynamics::new(PolicyKind::Chain, p)?.step(s, rng))
}

pub fn step_chain_hat<R: Rng + ?Sized>(
    s: CountsState,
    p: &MarketParams,
    rng: &mut R,
) -> Result<(CountsState, StepEvent)> {
    Ok(CountsDynamics::new(PolicyKind::ChainHat, p)?.step(s, rng))
}

pub fn step_bilateral_e_tilde<R: Rng + ?Sized>(
    s: CountsState,
    p: &MarketParams,
    rng: &mut R,
) -> Result<(CountsState, StepEvent)> {
    Ok(CountsDynamics::new(PolicyKind::BilateralETilde, p)?.step(s, rng))
}

/// Streaming estimator fed with the state observed at each epoch.
#[derive(Debug, Clone)]
pub(crate) struct EpochAverager {
    warmup: u64,
    epoch: u64,
    h: BatchMeans,
    e: BatchMeans,
    chain_sum: f64,
    chain_n: u64,
}

impl EpochAverager {
    pub(crate) fn new(rc: &RunControls) -> Result<Self> {
        rc.validate()?;
        let warmup = rc.warmup_epochs();
        let post = rc.arrivals - warmup;
        Ok(Self {
            warmup,
            epoch: 0,
            h: BatchMeans::new(post, DEFAULT_BATCHES)?,
            e: BatchMeans::new(post, DEFAULT_BATCHES)?,
            chain_sum: 0.0,
            chain_n: 0,
        })
    }

    /// Record the state seen by the arrival at this epoch and its event.
    #[inline]
    pub(crate) fn observe(&mut self, s: CountsState, ev: &StepEvent) {
        if self.epoch >= self.warmup {
            self.h.push(s.h as f64);
            self.e.push(s.e as f64);
            if ev.chain_len > 0 {
                self.chain_sum += ev.chain_len as f64;
                self.chain_n += 1;
            }
        }
        self.epoch += 1;
    }

    pub(crate) fn summary(&self, p: &MarketParams, chain: bool) -> Result<SimSummary> {
        let h = self.h.finish();
        let e = self.e.finish();
        let w_h = little_law(h.mean, p.lambda_h)?;
        let w_e = if p.lambda_e > 0.0 {
            little_law(e.mean, p.lambda_e)?
        } else {
            0.0
        };
        Ok(SimSummary {
            mean_h: h.mean,
            mean_e: e.mean,
            w_h,
            w_e,
            chain_len_mean_given_positive: (chain && self.chain_n > 0)
                .then(|| self.chain_sum / self.chain_n as f64),
            ci_half_width_h: Z95 * h.se / p.lambda_h,
            se_mean_h: h.se,
            se_mean_e: e.se,
            samples: self.epoch.saturating_sub(self.warmup),
        })
    }
}

/// Simulate one replica from the empty market.
///
/// The stream is fully determined by `(rc.seed, replica)`.
pub fn run_replica(
    policy: PolicyKind,
    p: &MarketParams,
    rc: &RunControls,
    replica: u64,
) -> Result<SimSummary> {
    run_replica_from(policy, p, rc, replica, CountsState::EMPTY)
}

/// Simulate one replica from a given initial state.
pub fn run_replica_from(
    policy: PolicyKind,
    p: &MarketParams,
    rc: &RunControls,
    replica: u64,
    init: CountsState,
) -> Result<SimSummary> {
    let dynamics = CountsDynamics::new(policy, p)?;
    let mut avg = EpochAverager::new(rc)?;
    let mut rng = replica_rng(rc.seed, replica);
    let mut s = init;
    for _ in 0..rc.arrivals {
        let (next, ev) = dynamics.step(s, &mut rng);
        avg.observe(s, &ev);
        s = next;
    }
    avg.summary(p, policy.is_chain())
}

/// Simulate `rc.replicas` replicas in parallel; results are in replica order.
pub fn run_replicas(
    policy: PolicyKind,
    p: &MarketParams,
    rc: &RunControls,
) -> Result<Vec<SimSummary>> {
    (0..rc.replicas as u64)
        .into_par_iter()
        .map(|i| run_replica(policy, p, rc, i))
        .collect()
}

/// Record the state sequence of a run; entry `k` is the state seen at epoch `k`.
pub fn trajectory(
    policy: PolicyKind,
    p: &MarketParams,
    arrivals: u64,
    seed: u64,
) -> Result<Vec<CountsState>> {
    let dynamics = CountsDynamics::new(policy, p)?;
    let mut rng = replica_rng(seed, 0);
    let mut s = CountsState::EMPTY;
    let mut out = Vec::with_capacity(arrivals as usize + 1);
    out.push(s);
    for _ in 0..arrivals {
        s = dynamics.step(s, &mut rng).0;
        out.push(s);
    }
    Ok(out)
}
