//! The interface shared by every fitted multi-fidelity method.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Predictive mean and variance at the highest fidelity.
#[derive(Debug, Clone, PartialEq)]
pub struct MfPrediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
}

pub trait MultiFidelityModel: Send + Sync {
    /// Number of raw input columns, without any fidelity token.
    fn input_dim(&self) -> usize;

    fn predict_high(&self, x: &DMatrix<f64>) -> Result<MfPrediction>;
}
