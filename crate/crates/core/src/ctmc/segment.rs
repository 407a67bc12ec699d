//! Length distributions of chain segments.

use crate::numeric::powu;
use crate::params::MarketParams;

/// Probability that a segment started with `h` waiting H agents and no E
/// agents removes exactly `i` of them.
pub fn chain_seg_pmf(h: usize, i: usize, p: &MarketParams) -> f64 {
    if i > h {
        return 0.0;
    }
    let q = 1.0 - p.p_h;
    chain_seg_tail(h, i, p) * powu(q, h - i)
}

/// Probability that such a segment removes at least `k` H agents.
pub fn chain_seg_tail(h: usize, k: usize, p: &MarketParams) -> f64 {
    if k > h {
        return 0.0;
    }
    let q = 1.0 - p.p_h;
    (0..k).map(|j| 1.0 - powu(q, h - j)).product()
}

/// `chain_seg_pmf(h, i, p)` for every `i` in `0..=h`, in one linear pass.
pub fn chain_seg_pmf_all(h: usize, p: &MarketParams) -> Vec<f64> {
    let q = 1.0 - p.p_h;
    let mut out = Vec::with_capacity(h + 1);
    let mut tail = 1.0;
    for i in 0..=h {
        out.push(tail * powu(q, h - i));
        if i < h {
            tail *= 1.0 - powu(q, h - i);
        }
    }
    out
}

/// Absolute gap in `P[S_h = i] = P[S_h >= m] * P[S_{h-m} = i-m]` for `m <= i <= h`.
pub fn check_memoryless(h: usize, m: usize, i: usize, p: &MarketParams) -> f64 {
    assert!(m <= i && i <= h, "need m <= i <= h");
    let lhs = chain_seg_pmf(h, i, p);
    let rhs = chain_seg_tail(h, m, p) * chain_seg_pmf(h - m, i - m, p);
    (lhs - rhs).abs()
}

/// Joint distribution of removed (H, E) counts for a full local-search
/// segment started at `(h, e)`.
#[derive(Debug, Clone)]
pub struct RemovalDist {
    pub h: usize,
    pub e: usize,
    /// `prob[a * (e + 1) + b]`: probability of removing `a` H and `b` E agents.
    pub prob: Vec<f64>,
}

impl RemovalDist {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.prob[a * (self.e + 1) + b]
    }

    /// Expected number of removed agents.
    pub fn mean_removed(&self) -> f64 {
        let mut m = 0.0;
        for a in 0..=self.h {
            for b in 0..=self.e {
                m += (a + b) as f64 * self.get(a, b);
            }
        }
        m
    }
}

/// Dynamic program over the remaining state of an active segment.
pub fn chain_removal_dist(h: usize, e: usize, p: &MarketParams) -> RemovalDist {
    let q_h = 1.0 - p.p_h;
    let q_e = 1.0 - p.p_e;
    let w = e + 1;
    // active[x * w + y]: probability the segment is active with x H and y E left.
    let mut active = vec![0.0; (h + 1) * w];
    let mut prob = vec![0.0; (h + 1) * w];
    active[h * w + e] = 1.0;
    let pow_e: Vec<f64> = (0..=e).map(|y| powu(q_e, y)).collect();
    for x in (0..=h).rev() {
        let stay_h = powu(q_h, x);
        for y in (0..=e).rev() {
            let m = active[x * w + y];
            if m == 0.0 {
                continue;
            }
            if x > 0 {
                active[(x - 1) * w + y] += m * (1.0 - stay_h);
            }
            let no_h = m * stay_h;
            if y > 0 {
                active[x * w + y - 1] += no_h * (1.0 - pow_e[y]);
            }
            prob[(h - x) * w + (e - y)] += no_h * pow_e[y];
        }
    }
    RemovalDist { h, e, prob }
}
