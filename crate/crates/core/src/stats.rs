//! Latency statistics.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no samples")]
    Empty,
    #[error("percentile must lie in (0, 100], got {0}")]
    InvalidPercentile(String),
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p / 100 * n)`
/// of the ascending samples.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(StatsError::InvalidPercentile(alloc::format!("{p}")));
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), p) - 1])
}

fn nearest_rank(n: usize, p: f64) -> usize {
    // p * n / 100 keeps integer inputs exact (0.95 * 100 would not be)
    let rank = libm::ceil(p * n as f64 / 100.0) as usize;
    rank.clamp(1, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    pub fn from_millis(samples: &[f64]) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::Empty);
        }
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean_ms = sorted.iter().sum::<f64>() / n as f64;
        Ok(LatencySummary {
            count: n,
            mean_ms,
            p50_ms: sorted[nearest_rank(n, 50.0) - 1],
            p95_ms: sorted[nearest_rank(n, 95.0) - 1],
            max_ms: sorted[n - 1],
        })
    }
}
