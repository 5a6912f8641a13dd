use nalgebra::{DMatrix, DVector};

/// Per-column affine scaling of inputs and the response.
///
/// Scales are population standard deviations. A zero-variance column keeps
/// scale 1 and is shifted by its constant value.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    output_shift: f64,
    output_scale: f64,
}

fn shift_scale<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    // Relative threshold so that columns like {c, c+ulp} count as constant.
    if std <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0)
    } else {
        (mean, std)
    }
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        assert!(x.nrows() >= 1, "standardizer needs at least one row");
        let (input_shift, input_scale) = x
            .column_iter()
            .map(|c| shift_scale(c.iter()))
            .unzip();
        let (output_shift, output_scale) = shift_scale(y.iter());
        Self {
            input_shift,
            input_scale,
            output_shift,
            output_scale,
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            input_shift: vec![0.0; d],
            input_scale: vec![1.0; d],
            output_shift: 0.0,
            output_scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.input_shift.len()
    }

    pub fn input_shift(&self) -> &[f64] {
        &self.input_shift
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn output_shift(&self) -> f64 {
        self.output_shift
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn apply_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (s, c) = (self.input_shift[j], self.input_scale[j]);
            col.apply(|v| *v = (*v - s) / c);
        }
        out
    }

    pub fn invert_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (s, c) = (self.input_shift[j], self.input_scale[j]);
            col.apply(|v| *v = *v * c + s);
        }
        out
    }

    pub fn apply_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| (v - self.output_shift) / self.output_scale)
    }

    pub fn invert_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| v * self.output_scale + self.output_shift)
    }

    /// Maps a variance in standardized output units back to original units.
    pub fn invert_variance(&self, var: &DVector<f64>) -> DVector<f64> {
        let s2 = self.output_scale * self.output_scale;
        var.map(|v| v * s2)
    }
}
