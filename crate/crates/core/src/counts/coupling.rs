//! Pathwise couplings between a policy and a one-dimensional relative.
//!
//! Both couplings share the arrival coin. The chain coupling also shares the
//! bridge coin and, when the one-dimensional segment passes the current H
//! count of the full chain, the H coins from there on. The bilateral
//! coupling factors the no-match event of the full process into the
//! no-match event of the relative times an independent coin.

use rand::Rng;

use super::{AgentType, CountsDynamics, PolicyKind};
use crate::error::Result;
use crate::numeric::powu;
use crate::params::{replica_rng, CountsState, MarketParams, RunControls};
use crate::stats::{batch_estimate, BatchEstimate, DEFAULT_BATCHES};

/// States of two coupled processes at every epoch.
#[derive(Debug, Clone)]
pub struct CoupledTrace {
    /// `(full, relative)` states; the relative always has `e = 0`.
    pub pairs: Vec<(CountsState, CountsState)>,
    /// Epochs at which the dominance relation failed.
    pub violation_count: u64,
}

impl CoupledTrace {
    /// Batch-means estimates of the H counts of both legs after warmup.
    pub fn marginal_h(&self, warmup_fraction: f64) -> Result<(BatchEstimate, BatchEstimate)> {
        let start = (self.pairs.len() as f64 * warmup_fraction).floor() as usize;
        let tail = &self.pairs[start..];
        let a: Vec<f64> = tail.iter().map(|(x, _)| x.h as f64).collect();
        let b: Vec<f64> = tail.iter().map(|(_, y)| y.h as f64).collect();
        Ok((
            batch_estimate(&a, DEFAULT_BATCHES)?,
            batch_estimate(&b, DEFAULT_BATCHES)?,
        ))
    }
}

/// Couple the full chain policy with the chain policy that discards
/// unmatched E arrivals. Dominance: `h <= h_hat` at every epoch.
pub fn run_coupled_chain(p: &MarketParams, rc: &RunControls, replica: u64) -> Result<CoupledTrace> {
    let full = CountsDynamics::new(PolicyKind::Chain, p)?;
    let mut rng = replica_rng(rc.seed, replica);
    let mut s = CountsState::EMPTY;
    let mut hat = 0u64;
    let mut trace = CoupledTrace {
        pairs: Vec::with_capacity(rc.arrivals as usize + 1),
        violation_count: 0,
    };
    trace.pairs.push((s, CountsState::new(hat, 0)));
    for _ in 0..rc.arrivals {
        let arrival = full.arrival_type(&mut rng);
        let bridged = rng.gen::<f64>() < full.bridge_prob(arrival);
        if !bridged {
            match arrival {
                AgentType::H => {
                    s.h += 1;
                    hat += 1;
                }
                AgentType::E => s.e += 1,
            }
        } else if hat >= s.h {
            // Run the relative's segment coin by coin down to level s.h.
            let mut cur = hat;
            let mut reached = true;
            while cur > s.h {
                if rng.gen::<f64>() < 1.0 - powu(full.q_h(), cur as usize) {
                    cur -= 1;
                } else {
                    reached = false;
                    break;
                }
            }
            if reached {
                // Shared H coins from level s.h until the H run stops.
                let shared = full.h_run(CountsState::new(s.h, s.e), &mut rng);
                hat = shared.h;
                s = full.segment_after_h_run(shared, &mut rng);
            } else {
                hat = cur;
                s = full.segment(s, &mut rng);
            }
        } else {
            hat = full.h_run(CountsState::new(hat, 0), &mut rng).h;
            s = full.segment(s, &mut rng);
        }
        if s.h > hat {
            trace.violation_count += 1;
        }
        trace.pairs.push((s, CountsState::new(hat, 0)));
    }
    Ok(trace)
}

/// Couple E-priority bilateral matching with its variant where unmatched E
/// arrivals turn into H agents. Dominance: `h + e <= h_tilde + 1`.
pub fn run_coupled_bilateral_e(
    p: &MarketParams,
    rc: &RunControls,
    replica: u64,
) -> Result<CoupledTrace> {
    let full = CountsDynamics::new(PolicyKind::BilateralE, p)?;
    let tilde = CountsDynamics::new(PolicyKind::BilateralETilde, p)?;
    let mut rng = replica_rng(rc.seed, replica);
    let mut s = CountsState::EMPTY;
    let mut t = 0u64;
    let mut trace = CoupledTrace {
        pairs: Vec::with_capacity(rc.arrivals as usize + 1),
        violation_count: 0,
    };
    trace.pairs.push((s, CountsState::new(t, 0)));
    for _ in 0..rc.arrivals {
        let arrival = full.arrival_type(&mut rng);
        let total = s.h + s.e;
        if total >= t && total <= t + 1 {
            // Failure probabilities with a waiting H / E agent.
            let (q_with_h, q_with_e) = match arrival {
                AgentType::H => (full.q_hh(), full.q_he()),
                AgentType::E => (full.q_he(), full.q_ee()),
            };
            let miss_tilde = powu(q_with_h, t as usize);
            let miss_full = powu(q_with_h, s.h as usize) * powu(q_with_e, s.e as usize);
            let b1 = rng.gen::<f64>() < miss_tilde;
            let b2 = b1 && rng.gen::<f64>() < miss_full / miss_tilde;
            t = if b1 { t + 1 } else { t - 1 };
            if b2 {
                match arrival {
                    AgentType::H => s.h += 1,
                    AgentType::E => s.e += 1,
                }
            } else {
                // Matched: choose the partner type from its conditional law.
                let e_match = 1.0 - powu(q_with_e, s.e as usize);
                if rng.gen::<f64>() < e_match / (1.0 - miss_full) {
                    s.e -= 1;
                } else {
                    s.h -= 1;
                }
            }
        } else {
            s = full.step_given(s, arrival, &mut rng).0;
            t = tilde
                .step_given(CountsState::new(t, 0), arrival, &mut rng)
                .0
                .h;
        }
        if s.h + s.e > t + 1 {
            trace.violation_count += 1;
        }
        trace.pairs.push((s, CountsState::new(t, 0)));
    }
    Ok(trace)
}
