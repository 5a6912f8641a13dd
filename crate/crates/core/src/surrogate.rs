//! The probabilistic-regressor contract every stage of every algorithm uses.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::summary::{PredictiveSummary, QuantileLevels};

/// A fitted probabilistic regressor.
pub trait Surrogate: Send + Sync {
    /// Number of input columns expected by [`predict`](Self::predict).
    fn input_dim(&self) -> usize;

    fn predict(&self, x: &DMatrix<f64>, levels: &QuantileLevels) -> Result<PredictiveSummary>;
}

/// Fits surrogates. Implementations must be deterministic in `seed`.
pub trait SurrogateFactory: Send + Sync {
    fn name(&self) -> &str;

    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<Box<dyn Surrogate>>;
}

pub type SharedFactory = Arc<dyn SurrogateFactory>;

/// Predicts a fixed mean and variance everywhere.
#[derive(Debug, Clone)]
pub struct ConstantSurrogate {
    pub dim: usize,
    pub mean: f64,
    pub variance: f64,
}

impl Surrogate for ConstantSurrogate {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &DMatrix<f64>, levels: &QuantileLevels) -> Result<PredictiveSummary> {
        let n = x.nrows();
        Ok(PredictiveSummary::gaussian(
            DVector::from_element(n, self.mean),
            DVector::from_element(n, self.variance),
            levels,
        ))
    }
}
