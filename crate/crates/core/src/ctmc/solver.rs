//! Stationary distributions on a truncated state space.
//!
//! The default method is Grassmann-Taksar-Heyman elimination, an exact
//! direct solve that only adds nonnegative quantities and therefore keeps
//! full relative accuracy even for stiff rate structures. Rows are stored
//! as a skyline: states are ordered so that upward transitions stay within
//! a fixed bandwidth, and fill-in never leaves that band.

use super::rates::{default_token_rate, ChainState, CtmcKind, PolicyRates, RateQuery};
use super::segment::chain_removal_dist;
use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::params::{MarketParams, Regime};
use crate::theory;

pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-6;

/// Box of states `0..=h_max` by `0..=e_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    pub h_max: usize,
    /// Ignored by one-dimensional chains.
    pub e_max: usize,
    /// Largest stationary mass allowed on the outer layer of the box.
    pub boundary_tolerance: f64,
}

impl TruncationSpec {
    pub fn new(h_max: usize, e_max: usize) -> Self {
        Self {
            h_max,
            e_max,
            boundary_tolerance: DEFAULT_BOUNDARY_TOLERANCE,
        }
    }

    /// Four times the predicted mean H count, and `8 / p_e^2` for E.
    pub fn default_for(kind: CtmcKind, p: &MarketParams) -> Self {
        let mean = predicted_mean_h(kind, p);
        let h_max = (4.0 * mean).ceil() as usize + 10;
        let e_max = (8.0 / (p.p_e * p.p_e)).ceil() as usize;
        Self::new(h_max, e_max)
    }
}

fn predicted_mean_h(kind: CtmcKind, p: &MarketParams) -> f64 {
    let fallback = 1.0 / (p.p_h * p.p_h);
    let from = |r: Result<theory::LimitResult>| {
        r.map(|l| p.lambda_h * l.constant / l.scaling.factor(p.p_h))
            .unwrap_or(fallback)
    };
    match kind {
        CtmcKind::BilateralH => from(theory::limit_bilateral_h(p)),
        CtmcKind::BilateralE | CtmcKind::BilateralETilde => match p.regime() {
            Regime::HMinority => from(theory::bounds_bilateral_e(p).map(|b| b.upper)),
            _ => from(theory::limit_bilateral_h(p)),
        },
        CtmcKind::Chain | CtmcKind::ChainHat | CtmcKind::Token { .. } => {
            from(theory::bound_chain(p))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Exact elimination.
    Direct,
    /// Uniformized power iteration until the sup-norm change drops below `1e-13`.
    Power,
}

/// Stationary distribution of a truncated chain.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub trunc: TruncationSpec,
    uses_e: bool,
    uses_token: bool,
    pi: Vec<f64>,
    /// `max_j |(pi Q)_j|` on the truncated generator.
    pub residual: f64,
    /// Mass on states with `h = h_max` or `e = e_max`.
    pub boundary_mass: f64,
}

struct Layout {
    e_width: usize,
    t_width: usize,
    h_max: usize,
    e_max: usize,
    uses_e: bool,
    uses_token: bool,
}

impl Layout {
    fn new(q: &dyn RateQuery, trunc: &TruncationSpec) -> Self {
        let uses_e = q.uses_e();
        let uses_token = q.uses_token();
        let e_max = if uses_e { trunc.e_max } else { 0 };
        Self {
            e_width: e_max + 1,
            t_width: if uses_token { 2 } else { 1 },
            h_max: trunc.h_max,
            e_max,
            uses_e,
            uses_token,
        }
    }

    fn len(&self) -> usize {
        (self.h_max + 1) * self.e_width * self.t_width
    }

    fn index(&self, s: ChainState) -> Option<usize> {
        if s.h > self.h_max || s.e > self.e_max || (s.token && !self.uses_token) {
            return None;
        }
        Some((s.h * self.e_width + s.e) * self.t_width + s.token as usize)
    }

    fn state(&self, i: usize) -> ChainState {
        let token = self.t_width == 2 && i % 2 == 1;
        let j = i / self.t_width;
        ChainState {
            h: j / self.e_width,
            e: j % self.e_width,
            token,
        }
    }
}

/// Off-diagonal rates restricted to the box, one sparse row per state.
fn build_rows(q: &dyn RateQuery, layout: &Layout) -> Vec<Vec<(usize, f64)>> {
    use rayon::prelude::*;
    (0..layout.len())
        .into_par_iter()
        .map(|i| {
            let mut buf = Vec::new();
            q.transitions(layout.state(i), &mut buf);
            let mut row: Vec<(usize, f64)> = buf
                .into_iter()
                .filter_map(|(t, r)| layout.index(t).filter(|&j| j != i).map(|j| (j, r)))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect()
}

fn gth(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let n = rows.len();
    let band = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().map(move |&(j, _)| j.saturating_sub(i)))
        .max()
        .unwrap_or(0);
    let mut lo: Vec<usize> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.first().map_or(i, |&(j, _)| j.min(i)))
        .collect();
    for m in (1..n).rev() {
        for i in m.saturating_sub(band)..m {
            if lo[m] < lo[i] {
                lo[i] = lo[m];
            }
        }
    }
    let hi: Vec<usize> = (0..n).map(|i| (i + band).min(n - 1)).collect();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; hi[i] - lo[i] + 1]).collect();
    for (i, r) in rows.iter().enumerate() {
        for &(j, v) in r {
            a[i][j - lo[i]] += v;
        }
    }
    let mut out_rate = vec![0.0; n];
    for m in (1..n).rev() {
        let (head, tail) = a.split_at_mut(m);
        let row_m = &tail[0][..m - lo[m]];
        let s: f64 = row_m.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Reducible(m));
        }
        out_rate[m] = s;
        for i in m.saturating_sub(band)..m {
            let row_i = &mut head[i];
            let a_im = row_i[m - lo[i]];
            if a_im == 0.0 {
                continue;
            }
            let f = a_im / s;
            let off = lo[m] - lo[i];
            for (x, &y) in row_i[off..off + row_m.len()].iter_mut().zip(row_m) {
                *x += f * y;
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for m in 1..n {
        let mut acc = 0.0;
        for i in m.saturating_sub(band)..m {
            acc += pi[i] * a[i][m - lo[i]];
        }
        pi[m] = acc / out_rate[m];
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

fn power(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let n = rows.len();
    let exit: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|&(_, v)| v).sum())
        .collect();
    let unif = 1.01 * exit.iter().cloned().fold(0.0, f64::max);
    if !(unif > 0.0) {
        return Err(Error::Reducible(0));
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..10_000_000u64 {
        for j in 0..n {
            next[j] = pi[j] * (1.0 - exit[j] / unif);
        }
        for (i, r) in rows.iter().enumerate() {
            let w = pi[i] / unif;
            for &(j, v) in r {
                next[j] += w * v;
            }
        }
        let total: f64 = next.iter().sum();
        let mut change = 0.0f64;
        for j in 0..n {
            next[j] /= total;
            change = change.max((next[j] - pi[j]).abs());
        }
        std::mem::swap(&mut pi, &mut next);
        if change < 1e-13 {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence(
        "power iteration hit 10^7 iterations".into(),
    ))
}

fn residual(rows: &[Vec<(usize, f64)>], pi: &[f64]) -> f64 {
    let n = rows.len();
    let mut acc = vec![KahanSum::new(); n];
    for (i, r) in rows.iter().enumerate() {
        let mut exit = 0.0;
        for &(j, v) in r {
            acc[j].add(pi[i] * v);
            exit += v;
        }
        acc[i].add(-pi[i] * exit);
    }
    acc.iter().map(|k| k.value().abs()).fold(0.0, f64::max)
}

/// Stationary distribution of `q` restricted to `trunc`.
///
/// Fails with [`Error::TruncationTooSmall`] when more than
/// `trunc.boundary_tolerance` of the mass sits on the outer layer.
pub fn solve_stationary(
    q: &dyn RateQuery,
    trunc: TruncationSpec,
    method: SolveMethod,
) -> Result<StationaryDistribution> {
    let layout = Layout::new(q, &trunc);
    let rows = build_rows(q, &layout);
    let pi = match method {
        SolveMethod::Direct => gth(&rows)?,
        SolveMethod::Power => power(&rows)?,
    };
    let residual = residual(&rows, &pi);
    let boundary_mass: f64 = pi
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            let s = layout.state(i);
            s.h == layout.h_max || (layout.uses_e && s.e == layout.e_max)
        })
        .map(|(_, &x)| x)
        .sum();
    if boundary_mass > trunc.boundary_tolerance {
        return Err(Error::TruncationTooSmall {
            mass: boundary_mass,
            tolerance: trunc.boundary_tolerance,
        });
    }
    Ok(StationaryDistribution {
        trunc,
        uses_e: layout.uses_e,
        uses_token: layout.uses_token,
        pi,
        residual,
        boundary_mass,
    })
}

impl StationaryDistribution {
    fn layout(&self) -> Layout {
        let e_max = if self.uses_e { self.trunc.e_max } else { 0 };
        Layout {
            e_width: e_max + 1,
            t_width: if self.uses_token { 2 } else { 1 },
            h_max: self.trunc.h_max,
            e_max,
            uses_e: self.uses_e,
            uses_token: self.uses_token,
        }
    }

    /// Stationary probability of a state; zero outside the box.
    pub fn prob(&self, s: ChainState) -> f64 {
        self.layout().index(s).map_or(0.0, |i| self.pi[i])
    }

    /// All states with their probabilities.
    pub fn iter(&self) -> impl Iterator<Item = (ChainState, f64)> + '_ {
        let layout = self.layout();
        self.pi
            .iter()
            .enumerate()
            .map(move |(i, &x)| (layout.state(i), x))
    }

    /// `E[f(state)]`, summed with compensation.
    pub fn expect<F: Fn(ChainState) -> f64>(&self, f: F) -> f64 {
        self.iter()
            .map(|(s, x)| x * f(s))
            .collect::<KahanSum>()
            .value()
    }

    pub fn mean_h(&self) -> f64 {
        self.expect(|s| s.h as f64)
    }

    pub fn mean_e(&self) -> f64 {
        self.expect(|s| s.e as f64)
    }

    /// Marginal distribution of the H count.
    pub fn marginal_h(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.trunc.h_max + 1];
        for (s, x) in self.iter() {
            m[s.h] += x;
        }
        m
    }

    /// Marginal distribution of the E count.
    pub fn marginal_e(&self) -> Vec<f64> {
        let mut m = vec![0.0; if self.uses_e { self.trunc.e_max + 1 } else { 1 }];
        for (s, x) in self.iter() {
            m[s.e] += x;
        }
        m
    }

    /// `P[H >= k]`.
    pub fn tail_h(&self, k: usize) -> f64 {
        self.iter().filter(|(s, _)| s.h >= k).map(|(_, x)| x).sum()
    }

    /// `P[E > k]`.
    pub fn tail_e_above(&self, k: usize) -> f64 {
        self.iter().filter(|(s, _)| s.e > k).map(|(_, x)| x).sum()
    }
}

/// Mean segment length, given a segment forms, under the full chain policy.
pub fn expected_chain_length_stationary(
    p: &MarketParams,
    trunc: Option<TruncationSpec>,
) -> Result<f64> {
    p.validate()?;
    let kind = CtmcKind::Chain;
    let trunc = trunc.unwrap_or_else(|| TruncationSpec::default_for(kind, p));
    let pi = solve_stationary(&PolicyRates::new(kind, *p), trunc, SolveMethod::Direct)?;
    Ok(1.0 + pi.expect(|s| chain_removal_dist(s.h, s.e, p).mean_removed()))
}

/// Mean segment length, given a segment forms, when unmatched E arrivals leave.
pub fn expected_chain_length_hat(p: &MarketParams, trunc: Option<TruncationSpec>) -> Result<f64> {
    p.validate()?;
    let kind = CtmcKind::ChainHat;
    let trunc = trunc.unwrap_or_else(|| TruncationSpec::default_for(kind, p));
    let pi = solve_stationary(&PolicyRates::new(kind, *p), trunc, SolveMethod::Direct)?;
    Ok(1.0 + pi.expect(|s| chain_removal_dist(s.h, 0, p).mean_removed()))
}

/// Token-chain rates at the default step rate.
pub fn token_rates(p: &MarketParams) -> PolicyRates {
    PolicyRates::new(
        CtmcKind::Token {
            mu: default_token_rate(p),
        },
        *p,
    )
}
