//! Market parameters, regimes, run controls, summaries and RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Arrival rates, compatibility probabilities and chain count of a market.
///
/// Time is scaled so that `lambda_h + lambda_e` agents arrive per unit time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub lambda_h: f64,
    pub lambda_e: f64,
    pub p_h: f64,
    pub p_e: f64,
    /// Number of simultaneously active chains; only used by chain policies.
    pub d: u32,
}

impl MarketParams {
    /// Build and validate a parameter set.
    pub fn new(lambda_h: f64, lambda_e: f64, p_h: f64, p_e: f64, d: u32) -> Result<Self> {
        let p = Self {
            lambda_h,
            lambda_e,
            p_h,
            p_e,
            d,
        };
        p.validate()?;
        Ok(p)
    }

    /// Check every field invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.lambda_h.is_finite() && self.lambda_h > 0.0) {
            return bad(format!(
                "lambda_h must be positive and finite, got {}",
                self.lambda_h
            ));
        }
        if !(self.lambda_e.is_finite() && self.lambda_e >= 0.0) {
            return bad(format!(
                "lambda_e must be finite and >= 0, got {}",
                self.lambda_e
            ));
        }
        if !(self.p_h > 0.0 && self.p_h < 1.0) {
            return bad(format!("p_h must lie in (0, 1), got {}", self.p_h));
        }
        if !(self.p_e > 0.0 && self.p_e <= 1.0) {
            return bad(format!("p_e must lie in (0, 1], got {}", self.p_e));
        }
        if self.p_h > self.p_e {
            return bad(format!(
                "p_h ({}) must not exceed p_e ({})",
                self.p_h, self.p_e
            ));
        }
        if self.d < 1 {
            return bad("d must be >= 1".into());
        }
        Ok(())
    }

    pub fn total_rate(&self) -> f64 {
        self.lambda_h + self.lambda_e
    }

    /// Probability that an arrival is an H agent.
    pub fn prob_h(&self) -> f64 {
        self.lambda_h / self.total_rate()
    }

    pub fn regime(&self) -> Regime {
        regime(self)
    }

    pub fn with_p_h(mut self, p_h: f64) -> Self {
        self.p_h = p_h;
        self
    }

    pub fn with_d(mut self, d: u32) -> Self {
        self.d = d;
        self
    }
}

/// Which agent type arrives faster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    HMinority,
    HMajority,
    Balanced,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::HMinority => "H_MINORITY",
            Regime::HMajority => "H_MAJORITY",
            Regime::Balanced => "BALANCED",
        })
    }
}

/// Classify a market by comparing its arrival rates.
pub fn regime(p: &MarketParams) -> Regime {
    if p.lambda_h < p.lambda_e {
        Regime::HMinority
    } else if p.lambda_h > p.lambda_e {
        Regime::HMajority
    } else {
        Regime::Balanced
    }
}

/// Pool sizes observed at an arrival epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CountsState {
    pub h: u64,
    pub e: u64,
}

impl CountsState {
    pub const EMPTY: CountsState = CountsState { h: 0, e: 0 };

    pub fn new(h: u64, e: u64) -> Self {
        Self { h, e }
    }
}

/// Length and replication settings of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunControls {
    /// Number of arrival epochs per replica.
    pub arrivals: u64,
    /// Fraction of epochs discarded before averaging.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replicas: usize,
}

impl Default for RunControls {
    fn default() -> Self {
        Self {
            arrivals: 100_000,
            warmup_fraction: 0.5,
            seed: 1,
            replicas: 1,
        }
    }
}

impl RunControls {
    pub fn new(arrivals: u64, seed: u64) -> Self {
        Self {
            arrivals,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arrivals < 2 {
            return Err(Error::InvalidParams(format!(
                "arrivals must be >= 2, got {}",
                self.arrivals
            )));
        }
        if !(self.warmup_fraction >= 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::InvalidParams(format!(
                "warmup_fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParams("replicas must be >= 1".into()));
        }
        Ok(())
    }

    /// Index of the first averaged epoch.
    pub fn warmup_epochs(&self) -> u64 {
        (self.arrivals as f64 * self.warmup_fraction).floor() as u64
    }
}

/// Output of one simulated replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSummary {
    pub mean_h: f64,
    pub mean_e: f64,
    pub w_h: f64,
    /// Zero when no E agents arrive.
    pub w_e: f64,
    /// Mean chain-segment length over epochs where a segment formed.
    pub chain_len_mean_given_positive: Option<f64>,
    /// 95% batch-means half-width of `w_h`.
    pub ci_half_width_h: f64,
    /// Batch-means standard error of `mean_h`.
    pub se_mean_h: f64,
    /// Batch-means standard error of `mean_e`.
    pub se_mean_e: f64,
    /// Number of averaged epochs.
    pub samples: u64,
}

/// Mean waiting time from a mean pool size and an arrival rate.
pub fn little_law(mean_count: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "arrival rate must be > 0, got {rate}"
        )));
    }
    if !(mean_count >= 0.0 && mean_count.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "mean count must be >= 0, got {mean_count}"
        )));
    }
    Ok(mean_count / rate)
}

/// Deterministic per-replica seed. The map `index -> seed` is injective for
/// a fixed base because it is a bijective mix of `base + index * odd`.
pub fn replica_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream of one replica.
pub fn replica_rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replica_seed(base, index))
}
