//! Batch-means estimation over the post-warmup part of a run.

use crate::error::{Error, Result};

pub const DEFAULT_BATCHES: usize = 20;

/// Normal quantile used for 95% half-widths.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Streaming batch-means accumulator over a known number of samples.
///
/// When the sample count is not a multiple of the batch count, the first
/// `total % batches` samples are dropped.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    skip: u64,
    batch_size: u64,
    seen: u64,
    current: f64,
    filled: u64,
    means: Vec<f64>,
}

impl BatchMeans {
    pub fn new(total: u64, batches: usize) -> Result<Self> {
        let nb = (batches as u64).min(total);
        if nb < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least 2 post-warmup samples for batch means, got {total}"
            )));
        }
        let batch_size = total / nb;
        Ok(Self {
            skip: total - batch_size * nb,
            batch_size,
            seen: 0,
            current: 0.0,
            filled: 0,
            means: Vec::with_capacity(nb as usize),
        })
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.seen += 1;
        if self.seen <= self.skip {
            return;
        }
        self.current += x;
        self.filled += 1;
        if self.filled == self.batch_size {
            self.means.push(self.current / self.batch_size as f64);
            self.current = 0.0;
            self.filled = 0;
        }
    }

    pub fn finish(&self) -> BatchEstimate {
        BatchEstimate::from_means(&self.means)
    }
}

/// Mean and standard error from batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEstimate {
    pub mean: f64,
    pub se: f64,
    pub batches: usize,
}

impl BatchEstimate {
    pub fn from_means(means: &[f64]) -> Self {
        let n = means.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                batches: 0,
            };
        }
        let mean = means.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            se,
            batches: n,
        }
    }

    pub fn half_width(&self) -> f64 {
        Z95 * self.se
    }
}

/// Batch-means estimate of a complete series.
pub fn batch_estimate(series: &[f64], batches: usize) -> Result<BatchEstimate> {
    let mut acc = BatchMeans::new(series.len() as u64, batches)?;
    for &x in series {
        acc.push(x);
    }
    Ok(acc.finish())
}

/// Mean and standard error of independent replica values.
pub fn replica_estimate(values: &[f64]) -> BatchEstimate {
    BatchEstimate::from_means(values)
}
