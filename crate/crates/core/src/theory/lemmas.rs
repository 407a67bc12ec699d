//! Tail bounds for two-dimensional random walks whose horizontal rates are
//! sandwiched by one-dimensional functions.
//!
//! Both calculators check their hypotheses numerically on `0..=check_up_to`
//! and refuse to produce a number when one fails.

use crate::ctmc::{ChainState, RateQuery};
use crate::error::{Error, Result};

/// Inputs of the two tail-bound lemmas.
pub struct TailBoundSpec<'a> {
    /// Rightward rate envelope.
    pub f: &'a dyn Fn(u64) -> f64,
    /// Leftward rate envelope.
    pub g: &'a dyn Fn(u64) -> f64,
    pub eta: u64,
    pub rho: f64,
    pub k: u64,
    /// Lower tail: bound on the mass outside the vertical set.
    pub epsilon: f64,
    /// Upper tail: the exceptional mass is at most `c * delta^x`.
    pub c: f64,
    pub delta: f64,
    /// Largest `x` at which hypotheses are checked.
    pub check_up_to: u64,
}

fn fail<T>(msg: String) -> Result<T> {
    Err(Error::Hypothesis(msg))
}

/// `P[X <= eta - k] <= eta eps (1 + 1 / (f(eta) (1 - rho))) + rho^k / (1 - rho)`.
///
/// With `rho = g(eta + 1) / f(eta)` the middle factor is `1 / (f(eta) - g(eta + 1))`.
pub fn lemma1_lower_tail_bound(spec: &TailBoundSpec) -> Result<f64> {
    let (f, g) = (spec.f, spec.g);
    if !(spec.rho > 0.0 && spec.rho < 1.0) {
        return fail(format!("rho = {} must lie in (0, 1)", spec.rho));
    }
    if !(spec.epsilon >= 0.0) {
        return fail(format!("epsilon = {} must be >= 0", spec.epsilon));
    }
    let top = spec.check_up_to.max(spec.eta + 1);
    for x in 0..=top {
        let (fx, gx) = (f(x), g(x));
        if !(fx > 0.0 && fx.is_finite()) {
            return fail(format!("f({x}) = {fx} is not positive"));
        }
        if !(gx > 0.0 && gx.is_finite()) && x > 0 {
            return fail(format!("g({x}) = {gx} is not positive"));
        }
        if x > 0 && f(x) > f(x - 1) {
            return fail(format!("f is not nonincreasing at {x}"));
        }
        if x > 0 && g(x) < g(x - 1) {
            return fail(format!("g is not nondecreasing at {x}"));
        }
    }
    let ratio = g(spec.eta + 1) / f(spec.eta);
    if !(ratio < spec.rho) {
        return fail(format!(
            "g(eta + 1) / f(eta) = {ratio} is not below rho = {}",
            spec.rho
        ));
    }
    let eta = spec.eta as f64;
    let gap = f(spec.eta) * (1.0 - spec.rho);
    Ok(eta * spec.epsilon * (1.0 + 1.0 / gap) + spec.rho.powf(spec.k as f64) / (1.0 - spec.rho))
}

/// `P[X >= eta + k] <= rho^k / (1 - rho) (1 + c + c (k + 1) / (g(eta + 1) - f(eta)))`.
pub fn lemma2_upper_tail_bound(spec: &TailBoundSpec) -> Result<f64> {
    let (f, g) = (spec.f, spec.g);
    if !(spec.rho < 1.0 && spec.rho >= spec.delta) {
        return fail(format!(
            "rho = {} must lie in [delta, 1) with delta = {}",
            spec.rho, spec.delta
        ));
    }
    if !(spec.delta >= 0.0 && spec.delta < 1.0) {
        return fail(format!("delta = {} must lie in [0, 1)", spec.delta));
    }
    if !(spec.c >= 0.0) {
        return fail(format!("c = {} must be >= 0", spec.c));
    }
    let g_ref = g(spec.eta + 1);
    for x in spec.eta..=spec.check_up_to.max(spec.eta) {
        let (fx, gx1) = (f(x), g(x + 1));
        if !(fx > 0.0 && gx1 > 0.0 && fx.is_finite() && gx1.is_finite()) {
            return fail(format!(
                "f({x}) = {fx} and g({}) = {gx1} must be positive",
                x + 1
            ));
        }
        if fx / gx1 > spec.rho {
            return fail(format!(
                "f({x}) / g({}) = {} exceeds rho = {}",
                x + 1,
                fx / gx1,
                spec.rho
            ));
        }
        if spec.c > 0.0 {
            let xf = x as f64;
            if spec.delta.powf(xf) / gx1 > spec.rho.powf(xf) / g_ref {
                return fail(format!(
                    "delta^x / g(x + 1) exceeds rho^x / g(eta + 1) at x = {x}"
                ));
            }
        }
    }
    let gap = g_ref - f(spec.eta);
    if spec.c > 0.0 && !(gap > 0.0) {
        return fail(format!("g(eta + 1) - f(eta) = {gap} must be positive"));
    }
    let k = spec.k as f64;
    let extra = if spec.c > 0.0 {
        spec.c + spec.c * (k + 1.0) / gap
    } else {
        0.0
    };
    Ok(spec.rho.powf(k) / (1.0 - spec.rho) * (1.0 + extra))
}

fn horizontal(q: &dyn RateQuery, x: usize, y: usize) -> (f64, f64) {
    let s = ChainState::new(x, y);
    let right = q.rate(s, ChainState::new(x + 1, y));
    let left = if x > 0 {
        q.rate(s, ChainState::new(x - 1, y))
    } else {
        0.0
    };
    (right, left)
}

/// Check `right(x, y) >= f(x)` and `left(x, y) <= g(x)` for `x <= x_max`
/// and every `y <= y_max` with `in_set(y)`.
pub fn check_lemma1_envelope(
    q: &dyn RateQuery,
    f: &dyn Fn(u64) -> f64,
    g: &dyn Fn(u64) -> f64,
    x_max: usize,
    y_max: usize,
    in_set: &dyn Fn(usize) -> bool,
) -> Result<()> {
    let tol = 1e-12;
    for x in 0..=x_max {
        for y in (0..=y_max).filter(|&y| in_set(y)) {
            let (right, left) = horizontal(q, x, y);
            let (fx, gx) = (f(x as u64), g(x as u64));
            if right < fx * (1.0 - tol) {
                return fail(format!(
                    "rightward rate {right} below f = {fx} at ({x}, {y})"
                ));
            }
            if left > gx * (1.0 + tol) {
                return fail(format!("leftward rate {left} above g = {gx} at ({x}, {y})"));
            }
        }
    }
    Ok(())
}

/// Check `right(x, y) <= f(x)` and `left(x, y) >= g(x)` for `x <= x_max`
/// and every `y <= y_max` with `in_set(x, y)`.
pub fn check_lemma2_envelope(
    q: &dyn RateQuery,
    f: &dyn Fn(u64) -> f64,
    g: &dyn Fn(u64) -> f64,
    x_max: usize,
    y_max: usize,
    in_set: &dyn Fn(usize, usize) -> bool,
) -> Result<()> {
    let tol = 1e-12;
    for x in 0..=x_max {
        for y in (0..=y_max).filter(|&y| in_set(x, y)) {
            let (right, left) = horizontal(q, x, y);
            let (fx, gx) = (f(x as u64), g(x as u64));
            if right > fx * (1.0 + tol) {
                return fail(format!(
                    "rightward rate {right} above f = {fx} at ({x}, {y})"
                ));
            }
            if x > 0 && left < gx * (1.0 - tol) {
                return fail(format!("leftward rate {left} below g = {gx} at ({x}, {y})"));
            }
        }
    }
    Ok(())
}
