use crate::error::{Error, Result};

pub const HD_DIMS: [usize; 5] = [10, 20, 30, 40, 50];

pub(crate) fn hd_unchecked(x: &[f64], t: usize) -> f64 {
    let hf = x.windows(2).map(|w| (2.0 * w[1] * w[1] - w[0]).powi(2)).sum::<f64>() + (x[0] - 1.0).powi(2);
    if t == 2 {
        return hf;
    }
    0.8 * hf + x.windows(2).map(|w| 0.4 * w[0] * w[1]).sum::<f64>() - 50.0
}

/// High-dimensional two-fidelity suite; `t = 2` is the high fidelity.
pub fn eval_hd(x: &[f64], d: usize, t: usize) -> Result<f64> {
    if !HD_DIMS.contains(&d) {
        return Err(Error::InvalidInput(format!("HD suite dimension must be one of {HD_DIMS:?}, got {d}")));
    }
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if !(1..=2).contains(&t) {
        return Err(Error::InvalidInput(format!("HD suite has fidelities 1 and 2, got {t}")));
    }
    Ok(hd_unchecked(x, t))
}
