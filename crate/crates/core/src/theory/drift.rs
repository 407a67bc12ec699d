//! Mean-field drift balance for the bilateral policies.
//!
//! Setting the stationary drift in both coordinates to zero and moving the
//! expectation inside the rates gives two equations in `(h, e)`; their root
//! approximates the mean pool sizes.

use crate::error::{Error, Result};
use crate::numeric::powf;
use crate::params::{regime, MarketParams, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftPolicy {
    BilateralH,
    BilateralE,
}

/// Horizontal and vertical drift at a real-valued point.
pub fn drift_residual(policy: DriftPolicy, point: (f64, f64), p: &MarketParams) -> (f64, f64) {
    let (h, e) = point;
    let a = powf(1.0 - p.p_h * p.p_h, h);
    let b_h = powf(1.0 - p.p_e * p.p_h, h);
    let b_e = powf(1.0 - p.p_e * p.p_h, e);
    let c_e = powf(1.0 - p.p_e * p.p_e, e);
    let (lh, le) = (p.lambda_h, p.lambda_e);
    match policy {
        DriftPolicy::BilateralH => (
            lh * a * b_e - lh * (1.0 - a) - le * (1.0 - b_h),
            le * b_h * c_e - lh * a * (1.0 - b_e) - le * b_h * (1.0 - c_e),
        ),
        DriftPolicy::BilateralE => (
            lh * a * b_e - lh * b_e * (1.0 - a) - le * c_e * (1.0 - b_h),
            le * b_h * c_e - lh * (1.0 - b_e) - le * (1.0 - c_e),
        ),
    }
}

/// Closed-form point at which the drifts are small for small `p_h`.
pub fn heuristic_point(policy: DriftPolicy, p: &MarketParams) -> Result<(f64, f64)> {
    let (lh, le) = (p.lambda_h, p.lambda_e);
    let ln_c = (1.0 - p.p_e * p.p_e).ln();
    match regime(p) {
        Regime::Balanced => Err(Error::BalancedRegime),
        Regime::HMajority => Ok(((2.0 * lh / (lh + le)).ln() / (p.p_h * p.p_h), 0.0)),
        Regime::HMinority => Ok(match policy {
            DriftPolicy::BilateralH => {
                ((le / (le - lh)).ln() / (p.p_e * p.p_h), -(2f64.ln()) / ln_c)
            }
            DriftPolicy::BilateralE => (
                ((le + lh) / (le - lh)).ln() / (p.p_e * p.p_h),
                ((le + lh) / (2.0 * le)).ln() / ln_c,
            ),
        }),
    }
}

fn norm(r: (f64, f64)) -> f64 {
    r.0.abs().max(r.1.abs())
}

/// Damped Newton iteration on the drift equations until the sup-norm
/// residual is at most `1e-10`. Starts from [`heuristic_point`] when `init`
/// is `None`. Steps are halved until the residual decreases.
pub fn drift_solve(
    policy: DriftPolicy,
    p: &MarketParams,
    init: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    let mut x = match init {
        Some(x) => x,
        None => heuristic_point(policy, p)?,
    };
    let f = |x: (f64, f64)| drift_residual(policy, x, p);
    let mut r = f(x);
    for _ in 0..1000 {
        if norm(r) <= 1e-10 {
            return Ok(x);
        }
        let hx = 1e-6 * x.0.abs().max(1.0);
        let he = 1e-6 * x.1.abs().max(1.0);
        let (a1, a2) = f((x.0 + hx, x.1));
        let (b1, b2) = f((x.0 - hx, x.1));
        let (c1, c2) = f((x.0, x.1 + he));
        let (d1, d2) = f((x.0, x.1 - he));
        let j11 = (a1 - b1) / (2.0 * hx);
        let j21 = (a2 - b2) / (2.0 * hx);
        let j12 = (c1 - d1) / (2.0 * he);
        let j22 = (c2 - d2) / (2.0 * he);
        let det = j11 * j22 - j12 * j21;
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::NoConvergence("singular drift Jacobian".into()));
        }
        let dx = (
            -(j22 * r.0 - j12 * r.1) / det,
            -(-j21 * r.0 + j11 * r.1) / det,
        );
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = (x.0 + step * dx.0, x.1 + step * dx.1);
            let rc = f(cand);
            if norm(rc) < norm(r) {
                x = cand;
                r = rc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(r) <= 1e-10 {
        Ok(x)
    } else {
        Err(Error::NoConvergence(format!(
            "drift residual {:.3e} after Newton iterations",
            norm(r)
        )))
    }
}
