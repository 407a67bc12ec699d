//! Closed-form limit constants as `p_h -> 0`, bounds, heuristics and
//! related solvers.
//!
//! A constant `c` with scaling [`Scaling::InvPh`] predicts `w_H ~ c / p_h`;
//! with [`Scaling::InvPhSq`] it predicts `w_H ~ c / p_h^2`.

mod drift;
mod lemmas;

pub use drift::{drift_residual, drift_solve, heuristic_point, DriftPolicy};
pub use lemmas::{
    check_lemma1_envelope, check_lemma2_envelope, lemma1_lower_tail_bound, lemma2_upper_tail_bound,
    TailBoundSpec,
};

use crate::error::{Error, Result};
use crate::numeric::{bisect, powf, powu};
use crate::params::{regime, MarketParams, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scaling {
    InvPh,
    InvPhSq,
}

impl Scaling {
    /// `p_h` or `p_h^2`; the predicted waiting time is `constant / factor`.
    pub fn factor(&self, p_h: f64) -> f64 {
        match self {
            Scaling::InvPh => p_h,
            Scaling::InvPhSq => p_h * p_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    Exact,
    UpperBound,
    LowerBound,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitResult {
    pub scaling: Scaling,
    pub constant: f64,
    pub kind: BoundKind,
}

impl LimitResult {
    fn new(scaling: Scaling, constant: f64, kind: BoundKind) -> Result<Self> {
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "limit constant {constant} is not positive and finite"
            )));
        }
        Ok(Self {
            scaling,
            constant,
            kind,
        })
    }

    /// Predicted H waiting time at a given `p_h`.
    pub fn predicted_w_h(&self, p_h: f64) -> f64 {
        self.constant / self.scaling.factor(p_h)
    }
}

fn h_majority_constant(p: &MarketParams) -> f64 {
    (2.0 * p.lambda_h / (p.lambda_h + p.lambda_e)).ln() / p.lambda_h
}

/// Waiting-time limit under H-priority bilateral matching.
pub fn limit_bilateral_h(p: &MarketParams) -> Result<LimitResult> {
    match regime(p) {
        Regime::Balanced => Err(Error::BalancedRegime),
        Regime::HMinority => LimitResult::new(
            Scaling::InvPh,
            (p.lambda_e / (p.lambda_e - p.lambda_h)).ln() / (p.p_e * p.lambda_h),
            BoundKind::Exact,
        ),
        Regime::HMajority => {
            LimitResult::new(Scaling::InvPhSq, h_majority_constant(p), BoundKind::Exact)
        }
    }
}

/// Proven bounds and heuristic guess under E-priority bilateral matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralEBounds {
    pub lower: LimitResult,
    pub upper: LimitResult,
    pub heuristic: LimitResult,
}

/// Waiting-time bounds under E-priority bilateral matching. In the
/// H-majority regime all three coincide with the exact limit.
pub fn bounds_bilateral_e(p: &MarketParams) -> Result<BilateralEBounds> {
    match regime(p) {
        Regime::Balanced => Err(Error::BalancedRegime),
        Regime::HMinority => {
            let (lh, le, pe) = (p.lambda_h, p.lambda_e, p.p_e);
            Ok(BilateralEBounds {
                lower: LimitResult::new(
                    Scaling::InvPh,
                    (le / (le - lh)).ln() / (pe * lh),
                    BoundKind::LowerBound,
                )?,
                upper: LimitResult::new(
                    Scaling::InvPh,
                    (2.0 * le / (le - lh)).ln() / (pe * lh),
                    BoundKind::UpperBound,
                )?,
                heuristic: LimitResult::new(
                    Scaling::InvPh,
                    ((le + lh) / (le - lh)).ln() / (pe * lh),
                    BoundKind::Heuristic,
                )?,
            })
        }
        Regime::HMajority => {
            let exact =
                LimitResult::new(Scaling::InvPhSq, h_majority_constant(p), BoundKind::Exact)?;
            Ok(BilateralEBounds {
                lower: exact,
                upper: exact,
                heuristic: exact,
            })
        }
    }
}

/// Upper bound on the waiting-time limit under chain matching; exact when `p_e = 1`.
pub fn bound_chain(p: &MarketParams) -> Result<LimitResult> {
    if p.lambda_e <= 0.0 {
        return Err(Error::InvalidParams(
            "chain bound needs lambda_e > 0".into(),
        ));
    }
    let cover = 1.0 - powu(1.0 - p.p_e, p.d as usize);
    let kind = if p.p_e == 1.0 {
        BoundKind::Exact
    } else {
        BoundKind::UpperBound
    };
    LimitResult::new(
        Scaling::InvPh,
        (p.lambda_h / (p.lambda_e * cover) + 1.0).ln() / p.lambda_h,
        kind,
    )
}

/// Finite-`p_h` heuristic for `p_h * w_H` under chain matching.
pub fn heuristic_chain_constant(p: &MarketParams) -> Result<LimitResult> {
    let reach = 1.0 - powu(1.0 - p.p_h, p.d as usize);
    let ratio = (p.lambda_h + p.lambda_e) / (p.lambda_h * reach + p.lambda_e);
    LimitResult::new(
        Scaling::InvPh,
        ratio.ln() / p.lambda_h,
        BoundKind::Heuristic,
    )
}

/// Limit of the mean segment length given that a segment forms.
pub fn chain_length_limit(p: &MarketParams) -> Result<f64> {
    let miss = powu(1.0 - p.p_e, p.d as usize);
    let cover = p.lambda_e * (1.0 - miss);
    if !(cover > 0.0) {
        return Err(Error::InvalidParams(
            "chain length limit needs lambda_e * (1 - (1 - p_e)^d) > 0".into(),
        ));
    }
    Ok((p.lambda_h + p.lambda_e * miss) / cover + 1.0)
}

/// The ratio `x = lambda_h / lambda_e` above which the H-majority constant
/// starts to decrease: the root of `(x + 1) ln(2 - 2 / (x + 1)) = 1`.
pub fn critical_ratio() -> f64 {
    bisect(critical_ratio_residual, 1.0 + 1e-12, 10.0, 1e-12).expect("sign change on (1, 10)")
}

/// `(x + 1) ln(2 - 2 / (x + 1)) - 1`.
pub fn critical_ratio_residual(x: f64) -> f64 {
    (x + 1.0) * (2.0 - 2.0 / (x + 1.0)).ln() - 1.0
}

/// How merging changes the first market's H waiting-time limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeChange {
    /// Same scaling; merged constant minus standalone constant.
    Delta(f64),
    /// Merging moves the market from `1/p_h` to `1/p_h^2` scaling.
    WorseRegime,
    /// Merging moves the market from `1/p_h^2` to `1/p_h` scaling.
    BetterRegime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeOutcome {
    pub standalone: LimitResult,
    pub merged: LimitResult,
    pub change: MergeChange,
}

/// Merge a market with a second one arriving at rates `(lambda_h2, lambda_e2)`
/// under H-priority bilateral matching.
pub fn merge_gain(p1: &MarketParams, lambda_h2: f64, lambda_e2: f64) -> Result<MergeOutcome> {
    if !(lambda_h2 >= 0.0 && lambda_e2 >= 0.0) {
        return Err(Error::InvalidParams(
            "second market rates must be >= 0".into(),
        ));
    }
    let merged_p = MarketParams {
        lambda_h: p1.lambda_h + lambda_h2,
        lambda_e: p1.lambda_e + lambda_e2,
        ..*p1
    };
    let standalone = limit_bilateral_h(p1)?;
    let merged = limit_bilateral_h(&merged_p)?;
    let change = match (standalone.scaling, merged.scaling) {
        (Scaling::InvPh, Scaling::InvPhSq) => MergeChange::WorseRegime,
        (Scaling::InvPhSq, Scaling::InvPh) => MergeChange::BetterRegime,
        _ => MergeChange::Delta(merged.constant - standalone.constant),
    };
    Ok(MergeOutcome {
        standalone,
        merged,
        change,
    })
}

/// Smallest E arrival rate of a bilateral market at which its H limit
/// drops to the chain bound of a market with E rate `lambda_e1`.
pub fn competing_rate_threshold(lambda_h: f64, lambda_e1: f64, p_e: f64, d: u32) -> Result<f64> {
    if !(lambda_h > 0.0 && lambda_e1 > 0.0 && p_e > 0.0 && p_e <= 1.0 && d >= 1) {
        return Err(Error::InvalidParams(
            "threshold inputs must be positive with p_e in (0, 1]".into(),
        ));
    }
    let b = lambda_e1 * (1.0 - powu(1.0 - p_e, d as usize));
    let a = lambda_h + b;
    let (ap, bp) = (powf(a, p_e), powf(b, p_e));
    let denom = ap - bp;
    if !(denom > 0.0) {
        return Err(Error::InvalidParams(
            "degenerate threshold denominator".into(),
        ));
    }
    Ok(lambda_h * ap / denom)
}
