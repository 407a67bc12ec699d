//! Transition rates of each policy's continuous-time chain.

use super::segment::{chain_removal_dist, chain_seg_pmf};
use crate::numeric::powu;
use crate::params::MarketParams;

/// A state of a policy chain. `e` is zero for one-dimensional chains and
/// `token` is only used by the chain with explicit segment steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ChainState {
    pub h: usize,
    pub e: usize,
    pub token: bool,
}

impl ChainState {
    pub fn new(h: usize, e: usize) -> Self {
        Self { h, e, token: false }
    }

    pub fn with_token(h: usize, e: usize, token: bool) -> Self {
        Self { h, e, token }
    }
}

/// Rates to the four nearest neighbours of a two-dimensional state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborRates {
    /// `(h, e) -> (h + 1, e)`
    pub right: f64,
    /// `(h, e) -> (h - 1, e)`
    pub left: f64,
    /// `(h, e) -> (h, e + 1)`
    pub up: f64,
    /// `(h, e) -> (h, e - 1)`
    pub down: f64,
}

impl NeighborRates {
    pub fn total(&self) -> f64 {
        self.right + self.left + self.up + self.down
    }
}

struct Q {
    hh: f64,
    he: f64,
    ee: f64,
}

fn q(p: &MarketParams) -> Q {
    Q {
        hh: 1.0 - p.p_h * p.p_h,
        he: 1.0 - p.p_h * p.p_e,
        ee: 1.0 - p.p_e * p.p_e,
    }
}

/// Rates under H-priority bilateral matching.
pub fn rates_bilateral_h(h: usize, e: usize, p: &MarketParams) -> NeighborRates {
    let q = q(p);
    let (hh_h, he_h, he_e, ee_e) = (powu(q.hh, h), powu(q.he, h), powu(q.he, e), powu(q.ee, e));
    NeighborRates {
        right: p.lambda_h * hh_h * he_e,
        left: p.lambda_h * (1.0 - hh_h) + p.lambda_e * (1.0 - he_h),
        up: p.lambda_e * he_h * ee_e,
        down: p.lambda_h * hh_h * (1.0 - he_e) + p.lambda_e * he_h * (1.0 - ee_e),
    }
}

/// Rates under E-priority bilateral matching.
pub fn rates_bilateral_e(h: usize, e: usize, p: &MarketParams) -> NeighborRates {
    let q = q(p);
    let (hh_h, he_h, he_e, ee_e) = (powu(q.hh, h), powu(q.he, h), powu(q.he, e), powu(q.ee, e));
    NeighborRates {
        right: p.lambda_h * hh_h * he_e,
        left: p.lambda_h * he_e * (1.0 - hh_h) + p.lambda_e * ee_e * (1.0 - he_h),
        up: p.lambda_e * he_h * ee_e,
        down: p.lambda_h * (1.0 - he_e) + p.lambda_e * (1.0 - ee_e),
    }
}

/// `(up, down)` rates of the one-dimensional variant where unmatched E
/// arrivals become H agents.
pub fn rates_bilateral_e_tilde(h: usize, p: &MarketParams) -> (f64, f64) {
    let q = q(p);
    let (hh_h, he_h) = (powu(q.hh, h), powu(q.he, h));
    (
        p.lambda_h * hh_h + p.lambda_e * he_h,
        p.lambda_h * (1.0 - hh_h) + p.lambda_e * (1.0 - he_h),
    )
}

/// Rate at which some arrival is matched by one of the `d` bridges.
pub fn segment_start_rate(p: &MarketParams) -> f64 {
    let d = p.d as usize;
    p.lambda_h * (1.0 - powu(1.0 - p.p_h, d)) + p.lambda_e * (1.0 - powu(1.0 - p.p_e, d))
}

/// Rates of the one-dimensional chain policy that discards unmatched E
/// arrivals: `(up, down)` where `down[i - 1]` is the rate to `h - i`.
pub fn rates_chain_hat(h: usize, p: &MarketParams) -> (f64, Vec<f64>) {
    let start = segment_start_rate(p);
    let up = p.lambda_h * powu(1.0 - p.p_h, p.d as usize);
    let down = (1..=h).map(|i| start * chain_seg_pmf(h, i, p)).collect();
    (up, down)
}

/// Default step rate of explicit segment formation.
pub fn default_token_rate(p: &MarketParams) -> f64 {
    1e3 * p.total_rate()
}

/// Outgoing transitions of the chain with explicit segment steps at rate `mu`.
/// Arrivals while a segment is in progress are lost.
pub fn rates_token_chain(s: ChainState, p: &MarketParams, mu: f64) -> Vec<(ChainState, f64)> {
    let q_h = 1.0 - p.p_h;
    let q_e = 1.0 - p.p_e;
    let d = p.d as usize;
    let mut out = Vec::with_capacity(3);
    let (h, e) = (s.h, s.e);
    if !s.token {
        out.push((
            ChainState::with_token(h + 1, e, false),
            p.lambda_h * powu(q_h, d),
        ));
        if p.lambda_e > 0.0 {
            out.push((
                ChainState::with_token(h, e + 1, false),
                p.lambda_e * powu(q_e, d),
            ));
        }
        out.push((ChainState::with_token(h, e, true), segment_start_rate(p)));
    } else {
        let (stay_h, stay_e) = (powu(q_h, h), powu(q_e, e));
        out.push((ChainState::with_token(h, e, false), mu * stay_h * stay_e));
        if h > 0 {
            out.push((ChainState::with_token(h - 1, e, true), mu * (1.0 - stay_h)));
        }
        if e > 0 {
            out.push((
                ChainState::with_token(h, e - 1, true),
                mu * stay_h * (1.0 - stay_e),
            ));
        }
    }
    out.retain(|&(_, r)| r > 0.0);
    out
}

/// Read-only access to the transition structure of a chain.
pub trait RateQuery: Sync {
    /// Whether states carry a meaningful E count.
    fn uses_e(&self) -> bool;

    /// Whether states carry a segment-in-progress flag.
    fn uses_token(&self) -> bool {
        false
    }

    /// Append every transition `s -> t` with `t != s` and positive rate.
    fn transitions(&self, s: ChainState, out: &mut Vec<(ChainState, f64)>);

    /// Rate of a single transition; zero when absent.
    fn rate(&self, from: ChainState, to: ChainState) -> f64 {
        let mut out = Vec::new();
        self.transitions(from, &mut out);
        out.iter().filter(|(t, _)| *t == to).map(|(_, r)| r).sum()
    }

    /// Total exit rate of a state.
    fn exit_rate(&self, s: ChainState) -> f64 {
        let mut out = Vec::new();
        self.transitions(s, &mut out);
        out.iter().map(|(_, r)| r).sum()
    }
}

/// Chains covered by [`PolicyRates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CtmcKind {
    BilateralH,
    BilateralE,
    /// Full two-dimensional chain policy with local search.
    Chain,
    /// One-dimensional chain policy without waiting E agents.
    ChainHat,
    BilateralETilde,
    /// Chain policy with segments advanced one agent at a time at rate `mu`.
    Token {
        mu: f64,
    },
}

impl CtmcKind {
    pub fn uses_e(&self) -> bool {
        matches!(
            self,
            CtmcKind::BilateralH | CtmcKind::BilateralE | CtmcKind::Chain | CtmcKind::Token { .. }
        )
    }
}

/// Rate function of one policy at one parameter point.
#[derive(Debug, Clone, Copy)]
pub struct PolicyRates {
    pub kind: CtmcKind,
    pub p: MarketParams,
}

impl PolicyRates {
    pub fn new(kind: CtmcKind, p: MarketParams) -> Self {
        Self { kind, p }
    }
}

fn push_neighbors(s: ChainState, r: NeighborRates, out: &mut Vec<(ChainState, f64)>) {
    let (h, e) = (s.h, s.e);
    let cand = [
        (h + 1, e, r.right),
        (h.wrapping_sub(1), e, r.left),
        (h, e + 1, r.up),
        (h, e.wrapping_sub(1), r.down),
    ];
    for (x, y, rate) in cand {
        if rate > 0.0 {
            out.push((ChainState::new(x, y), rate));
        }
    }
}

impl RateQuery for PolicyRates {
    fn uses_e(&self) -> bool {
        self.kind.uses_e()
    }

    fn uses_token(&self) -> bool {
        matches!(self.kind, CtmcKind::Token { .. })
    }

    fn transitions(&self, s: ChainState, out: &mut Vec<(ChainState, f64)>) {
        let p = &self.p;
        match self.kind {
            CtmcKind::BilateralH => push_neighbors(s, rates_bilateral_h(s.h, s.e, p), out),
            CtmcKind::BilateralE => push_neighbors(s, rates_bilateral_e(s.h, s.e, p), out),
            CtmcKind::BilateralETilde => {
                let (up, down) = rates_bilateral_e_tilde(s.h, p);
                push_neighbors(
                    s,
                    NeighborRates {
                        right: up,
                        left: down,
                        up: 0.0,
                        down: 0.0,
                    },
                    out,
                );
            }
            CtmcKind::ChainHat => {
                let (up, down) = rates_chain_hat(s.h, p);
                if up > 0.0 {
                    out.push((ChainState::new(s.h + 1, 0), up));
                }
                for (k, r) in down.into_iter().enumerate() {
                    if r > 0.0 {
                        out.push((ChainState::new(s.h - k - 1, 0), r));
                    }
                }
            }
            CtmcKind::Chain => {
                let d = p.d as usize;
                let up_h = p.lambda_h * powu(1.0 - p.p_h, d);
                let up_e = p.lambda_e * powu(1.0 - p.p_e, d);
                if up_h > 0.0 {
                    out.push((ChainState::new(s.h + 1, s.e), up_h));
                }
                if up_e > 0.0 {
                    out.push((ChainState::new(s.h, s.e + 1), up_e));
                }
                let start = segment_start_rate(p);
                let dist = chain_removal_dist(s.h, s.e, p);
                for a in 0..=s.h {
                    for b in 0..=s.e {
                        if a + b == 0 {
                            continue;
                        }
                        let r = start * dist.get(a, b);
                        if r > 0.0 {
                            out.push((ChainState::new(s.h - a, s.e - b), r));
                        }
                    }
                }
            }
            CtmcKind::Token { mu } => out.extend(rates_token_chain(s, p, mu)),
        }
    }
}
