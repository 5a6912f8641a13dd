use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    SquaredExponential,
    #[default]
    Matern52,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// One lengthscale per input dimension when set, a shared one otherwise.
    pub ard: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern52,
            ard: true,
        }
    }
}

impl KernelSpec {
    pub fn lengthscale_count(&self, d: usize) -> usize {
        if self.ard {
            d
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn check(&self, spec: &KernelSpec, d: usize) -> Result<()> {
        if self.lengthscales.len() != spec.lengthscale_count(d) {
            return Err(Error::InvalidInput(format!(
                "expected {} lengthscales, got {}",
                spec.lengthscale_count(d),
                self.lengthscales.len()
            )));
        }
        let positive = self.signal_variance > 0.0
            && self.noise_variance >= 0.0
            && self.lengthscales.iter().all(|&l| l > 0.0);
        if !positive {
            return Err(Error::InvalidInput("hyperparameters must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn lengthscale(&self, j: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[j]
        }
    }

    /// `[log l.., log signal, log noise]`.
    pub(crate) fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    pub(crate) fn from_log(theta: &[f64]) -> Self {
        let m = theta.len() - 2;
        Self {
            lengthscales: theta[..m].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[m].exp(),
            noise_variance: theta[m + 1].exp(),
        }
    }
}

/// Scaled squared distance `sum_j ((a_j - b_j) / l_j)^2`.
pub(crate) fn scaled_sq_dist(hyper: &GpHyperparams, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(j, (x, y))| {
            let t = (x - y) / hyper.lengthscale(j);
            t * t
        })
        .sum()
}

const SQRT5: f64 = 2.236_067_977_499_79;

/// Kernel value as a function of the scaled squared distance.
pub(crate) fn kernel_from_sq_dist(family: KernelFamily, signal: f64, r2: f64) -> f64 {
    match family {
        KernelFamily::SquaredExponential => signal * (-0.5 * r2).exp(),
        KernelFamily::Matern52 => {
            let r = r2.sqrt();
            signal * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
        }
    }
}

/// `dk / d(log l_j)` divided by the per-dimension term `(dx_j / l_j)^2`.
pub(crate) fn lengthscale_grad_factor(family: KernelFamily, signal: f64, r2: f64) -> f64 {
    match family {
        KernelFamily::SquaredExponential => signal * (-0.5 * r2).exp(),
        KernelFamily::Matern52 => {
            let r = r2.sqrt();
            signal * 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, hyper: &GpHyperparams, a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "kernel inputs must share a dimension");
    kernel_from_sq_dist(spec.family, hyper.signal_variance, scaled_sq_dist(hyper, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(signal: f64, l: f64) -> GpHyperparams {
        GpHyperparams {
            signal_variance: signal,
            lengthscales: vec![l],
            noise_variance: 0.0,
        }
    }

    #[test]
    fn zero_distance_is_signal_variance() {
        let se = KernelSpec {
            family: KernelFamily::SquaredExponential,
            ard: false,
        };
        assert_eq!(kernel_eval(&se, &hyper(2.0, 0.7), &[0.3, -1.0], &[0.3, -1.0]), 2.0);
        let m = KernelSpec {
            family: KernelFamily::Matern52,
            ard: false,
        };
        assert_eq!(kernel_eval(&m, &hyper(3.5, 0.2), &[4.0], &[4.0]), 3.5);
    }

    #[test]
    fn se_unit_distance() {
        let se = KernelSpec {
            family: KernelFamily::SquaredExponential,
            ard: false,
        };
        let k = kernel_eval(&se, &hyper(1.0, 1.0), &[0.0], &[1.0]);
        assert!((k - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn matern_closed_form_and_symmetry() {
        let m = KernelSpec::default();
        let h = GpHyperparams {
            signal_variance: 1.3,
            lengthscales: vec![0.5, 2.0],
            noise_variance: 0.0,
        };
        let a = [0.1, 0.4];
        let b = [0.6, -1.6];
        // r^2 = (0.5/0.5)^2 + (2/2)^2 = 2
        let r = 2f64.sqrt();
        let expect = 1.3 * (1.0 + 5f64.sqrt() * r + 5.0 / 3.0 * 2.0) * (-(5f64.sqrt()) * r).exp();
        assert!((kernel_eval(&m, &h, &a, &b) - expect).abs() < 1e-14);
        assert_eq!(kernel_eval(&m, &h, &a, &b), kernel_eval(&m, &h, &b, &a));
    }

    #[test]
    fn lengthscale_count_checked() {
        let spec = KernelSpec::default();
        let h = hyper(1.0, 1.0);
        assert!(h.check(&spec, 3).is_err());
        assert!(h.check(&KernelSpec { ard: false, ..spec }, 3).is_ok());
    }
}
