//! Bias, mean squared error and coverage of replicated estimates.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub estimand: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mse: f64,
    /// Percentage of intervals containing the truth.
    pub coverage: f64,
    /// Replications contributing to the row.
    pub used: usize,
    /// Replications dropped because the fit failed or was flagged.
    pub excluded: usize,
}

/// `bias = mean(est) - truth`, `MSE = mean((est - truth)^2)`, `CP = 100 * mean(low <= truth <= high)`.
pub fn compute_metrics(estimand: &str, estimates: &[f64], ci_lows: &[f64], ci_highs: &[f64], truth: f64) -> Result<MetricsRow> {
    let n = estimates.len();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    if ci_lows.len() != n || ci_highs.len() != n {
        return Err(ModelError::DimensionMismatch { expected: n, actual: ci_lows.len().min(ci_highs.len()) });
    }
    let nf = n as f64;
    let mean = estimates.iter().sum::<f64>() / nf;
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / nf;
    let covered = ci_lows.iter().zip(ci_highs).filter(|(lo, hi)| **lo <= truth && truth <= **hi).count();
    Ok(MetricsRow {
        estimand: estimand.to_string(),
        truth,
        mean_estimate: mean,
        bias: mean - truth,
        mse,
        coverage: 100.0 * covered as f64 / nf,
        used: n,
        excluded: 0,
    })
}

/// Metrics of one fitted model across replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub title: String,
    pub rows: Vec<MetricsRow>,
    pub replications: usize,
    /// Replications whose fit failed or was flagged.
    pub failed: usize,
}

impl MetricsTable {
    pub fn row(&self, estimand: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.estimand == estimand)
    }

    pub fn failure_rate(&self) -> f64 {
        self.failed as f64 / self.replications.max(1) as f64
    }
}

/// Accumulates `(estimate, low, high)` triples for one estimand.
#[derive(Clone, Debug, Default)]
pub struct Accumulator {
    pub estimates: Vec<f64>,
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
}

impl Accumulator {
    pub fn push(&mut self, estimate: f64, low: f64, high: f64) {
        self.estimates.push(estimate);
        self.lows.push(low);
        self.highs.push(high);
    }

    pub fn row(&self, estimand: &str, truth: f64, excluded: usize) -> MetricsRow {
        match compute_metrics(estimand, &self.estimates, &self.lows, &self.highs, truth) {
            Ok(mut row) => {
                row.excluded = excluded;
                row
            }
            Err(_) => MetricsRow {
                estimand: estimand.to_string(),
                truth,
                mean_estimate: f64::NAN,
                bias: f64::NAN,
                mse: f64::NAN,
                coverage: f64::NAN,
                used: 0,
                excluded,
            },
        }
    }
}
