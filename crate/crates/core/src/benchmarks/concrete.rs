//! Power-law low-fidelity model for concrete compressive strength.
//!
//! Inputs follow the UCI column order: cement, slag, fly ash, water,
//! superplasticizer, coarse aggregate, fine aggregate, age. Slag, fly ash and
//! superplasticizer enter as `v + 1` because the data contain zeros.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const CONCRETE_BETA: [f64; 7] = [2.56, -0.815, -0.0380, 0.0161, 0.00231, 0.0148, 0.292];

pub fn concrete_lf(x: &[f64]) -> Result<f64> {
    if x.len() != 8 {
        return Err(Error::DimensionMismatch { expected: 8, got: x.len() });
    }
    let [cement, slag, fly_ash, water, sp, _, _, age] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]];
    if !(cement > 0.0 && water > 0.0 && age > 0.0) {
        return Err(Error::InvalidInput("cement, water and age must be positive".into()));
    }
    if slag < 0.0 || fly_ash < 0.0 || sp < 0.0 {
        return Err(Error::InvalidInput("slag, fly ash and superplasticizer must be non-negative".into()));
    }
    let b = CONCRETE_BETA;
    Ok(b[0].exp()
        * (water / cement).powf(b[1])
        * cement.powf(b[2])
        * (slag + 1.0).powf(b[3])
        * (fly_ash + 1.0).powf(b[4])
        * (sp + 1.0).powf(b[5])
        * age.powf(b[6]))
}

/// Low-fidelity values for every row of an 8-column design.
pub fn concrete_lf_rows(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let values = (0..x.nrows())
        .map(|i| concrete_lf(&x.row(i).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}
