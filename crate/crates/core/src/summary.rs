//! Predictive summaries shared by every surrogate: mean, variance and a
//! fixed grid of quantiles.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

static CLAMPED_VARIANCES: AtomicUsize = AtomicUsize::new(0);

/// Number of negative predictive variances clamped to zero so far in this
/// process.
pub fn clamped_variance_count() -> usize {
    CLAMPED_VARIANCES.load(Ordering::Relaxed)
}

pub(crate) fn clamp_variance(v: f64) -> f64 {
    if v < 0.0 {
        CLAMPED_VARIANCES.fetch_add(1, Ordering::Relaxed);
        0.0
    } else {
        v
    }
}

/// Standard normal inverse CDF.
pub fn normal_icdf(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    Normal::standard().inverse_cdf(p)
}

/// Strictly increasing probabilities in the open unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileLevels(Vec<f64>);

impl QuantileLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidInput(
                "quantile levels must lie in (0, 1)".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "quantile levels must be strictly increasing".into(),
            ));
        }
        Ok(Self(levels))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for QuantileLevels {
    /// `{0.1, 0.2, ..., 0.9}`.
    fn default() -> Self {
        Self((1..=9).map(|k| k as f64 / 10.0).collect())
    }
}

impl TryFrom<Vec<f64>> for QuantileLevels {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevels> for Vec<f64> {
    fn from(q: QuantileLevels) -> Self {
        q.0
    }
}

/// Per-query predictive mean, variance and quantiles.
///
/// `quantiles` has one row per query and one column per level. Construction
/// clamps negative variances to zero and sorts each quantile row, so every
/// summary in the system satisfies both invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    mean: DVector<f64>,
    variance: DVector<f64>,
    quantiles: DMatrix<f64>,
}

impl PredictiveSummary {
    pub fn new(mean: DVector<f64>, variance: DVector<f64>, quantiles: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if variance.len() != n || quantiles.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "summary shape mismatch: {n} means, {} variances, {} quantile rows",
                variance.len(),
                quantiles.nrows()
            )));
        }
        let variance = variance.map(clamp_variance);
        let mut quantiles = quantiles;
        for i in 0..n {
            let mut row: Vec<f64> = quantiles.row(i).iter().copied().collect();
            if row.windows(2).any(|w| w[1] < w[0]) {
                row.sort_by(f64::total_cmp);
                for (j, v) in row.into_iter().enumerate() {
                    quantiles[(i, j)] = v;
                }
            }
        }
        Ok(Self {
            mean,
            variance,
            quantiles,
        })
    }

    /// Gaussian marginals: `q(tau) = mean + sd * icdf(tau)`.
    pub fn gaussian(mean: DVector<f64>, variance: DVector<f64>, levels: &QuantileLevels) -> Self {
        let variance = variance.map(clamp_variance);
        let z: Vec<f64> = levels.as_slice().iter().map(|&p| normal_icdf(p)).collect();
        let quantiles = DMatrix::from_fn(mean.len(), z.len(), |i, j| {
            if z[j] == 0.0 {
                mean[i]
            } else {
                mean[i] + variance[i].sqrt() * z[j]
            }
        });
        Self {
            mean,
            variance,
            quantiles,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn variance(&self) -> &DVector<f64> {
        &self.variance
    }

    pub fn quantiles(&self) -> &DMatrix<f64> {
        &self.quantiles
    }
}
