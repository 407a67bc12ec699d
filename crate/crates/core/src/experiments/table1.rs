//! Search for the E arrival rate at which a bilateral market matches the H
//! waiting time of a chain market.

use crate::counts::{run_replicas, PolicyKind};
use crate::error::{Error, Result};
use crate::params::{MarketParams, RunControls, SimSummary};
use crate::stats::Z95;
use crate::theory::competing_rate_threshold;

/// Bracket width at which bisection stops.
pub const BRACKET_TOLERANCE: f64 = 0.05;

/// Upper end of the initial bracket, as a multiple of the threshold.
pub const BRACKET_FACTOR: f64 = 50.0;

/// H waiting-time estimate over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitEstimate {
    pub w_h: f64,
    pub se: f64,
    pub replicas: Vec<SimSummary>,
}

fn estimate(policy: PolicyKind, p: &MarketParams, rc: &RunControls) -> Result<WaitEstimate> {
    let replicas = run_replicas(policy, p, rc)?;
    let k = replicas.len() as f64;
    let w_h = replicas.iter().map(|s| s.w_h).sum::<f64>() / k;
    let se = replicas
        .iter()
        .map(|s| (s.se_mean_h / p.lambda_h).powi(2))
        .sum::<f64>()
        .sqrt()
        / k;
    Ok(WaitEstimate { w_h, se, replicas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The bracket shrank to [`BRACKET_TOLERANCE`].
    Width,
    /// The difference at the returned point is within its 95% interval.
    CiOverlap,
}

/// One bisection evaluation: the difference of H waiting times and its
/// 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub lambda_e2: f64,
    pub diff: f64,
    pub half_width: f64,
}

impl Evaluation {
    fn sign(&self) -> Option<bool> {
        (self.diff.abs() > self.half_width).then_some(self.diff > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Result {
    pub lambda_e2: f64,
    pub threshold: f64,
    pub stop: StopReason,
    /// Final bracket.
    pub bracket: (f64, f64),
    pub evaluations: Vec<Evaluation>,
    pub chain: WaitEstimate,
    /// Bilateral estimate at the returned rate.
    pub bilateral: WaitEstimate,
}

/// Bisection over `lambda_e2` on `[threshold, 50 * threshold]` for the root of
/// `w_H(B_H; lambda_h, lambda_e2) - w_H(C(d); lambda_h, lambda_e1)`. Every
/// bilateral evaluation reuses the seeds of `rc`.
pub fn table1_search(
    lambda_h: f64,
    lambda_e1: f64,
    p_h: f64,
    p_e: f64,
    d: u32,
    rc: &RunControls,
) -> Result<Table1Result> {
    let chain_p = MarketParams::new(lambda_h, lambda_e1, p_h, p_e, d)?;
    let threshold = competing_rate_threshold(lambda_h, lambda_e1, p_e, d)?;
    let chain = estimate(PolicyKind::Chain, &chain_p, rc)?;
    let mut evaluations = Vec::new();
    let mut eval = |lambda_e2: f64| -> Result<(Evaluation, WaitEstimate)> {
        let p = MarketParams::new(lambda_h, lambda_e2, p_h, p_e, 1)?;
        let b = estimate(PolicyKind::BilateralH, &p, rc)?;
        let ev = Evaluation {
            lambda_e2,
            diff: b.w_h - chain.w_h,
            half_width: Z95 * (b.se * b.se + chain.se * chain.se).sqrt(),
        };
        evaluations.push(ev);
        Ok((ev, b))
    };

    let (mut lo, mut hi) = (threshold, BRACKET_FACTOR * threshold);
    let (ev_lo, b_lo) = eval(lo)?;
    let finish = |lambda_e2, stop, bracket, evaluations, bilateral, chain| Table1Result {
        lambda_e2,
        threshold,
        stop,
        bracket,
        evaluations,
        chain,
        bilateral,
    };
    match ev_lo.sign() {
        None => return Ok(finish(lo, StopReason::CiOverlap, (lo, hi), evaluations, b_lo, chain)),
        Some(false) => {
            return Err(Error::Bracket(format!(
                "bilateral wait at the threshold {lo:.4} is already below the chain wait ({:.4} +- {:.4})",
                ev_lo.diff, ev_lo.half_width
            )))
        }
        Some(true) => {}
    }
    let (ev_hi, b_hi) = eval(hi)?;
    match ev_hi.sign() {
        None => {
            return Ok(finish(
                hi,
                StopReason::CiOverlap,
                (lo, hi),
                evaluations,
                b_hi,
                chain,
            ))
        }
        Some(true) => {
            return Err(Error::Bracket(format!(
                "bilateral wait at {hi:.4} is still above the chain wait ({:.4} +- {:.4})",
                ev_hi.diff, ev_hi.half_width
            )))
        }
        Some(false) => {}
    }
    while hi - lo > BRACKET_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let (ev, b) = eval(mid)?;
        match ev.sign() {
            None => {
                return Ok(finish(
                    mid,
                    StopReason::CiOverlap,
                    (lo, hi),
                    evaluations,
                    b,
                    chain,
                ))
            }
            Some(true) => lo = mid,
            Some(false) => hi = mid,
        }
    }
    let root = 0.5 * (lo + hi);
    let (_, b) = eval(root)?;
    Ok(finish(
        root,
        StopReason::Width,
        (lo, hi),
        evaluations,
        b,
        chain,
    ))
}
