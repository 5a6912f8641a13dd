//! Heteroscedastic single-fidelity problems recast as two fidelities: the
//! low fidelity is the noiseless base function, the high fidelity adds
//! input-dependent Gaussian noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heteroscedastic {
    Goldberg,
    Yuan,
    Williams,
}

impl Heteroscedastic {
    pub const ALL: [Self; 3] = [Self::Goldberg, Self::Yuan, Self::Williams];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Goldberg => "goldberg",
            Self::Yuan => "yuan",
            Self::Williams => "williams",
        }
    }

    pub fn mean(&self, x: f64) -> f64 {
        match self {
            Self::Goldberg => 2.0 * (2.0 * PI * x).sin(),
            Self::Yuan => 2.0 * ((-30.0 * (x - 0.25).powi(2)).exp() + (PI * x * x).sin()) - 2.0,
            Self::Williams => (2.5 * x).sin() * (1.5 * x).sin(),
        }
    }

    /// Noise standard deviation.
    pub fn noise_sd(&self, x: f64) -> f64 {
        match self {
            Self::Goldberg => 0.5 + x,
            Self::Yuan => (2.0 * PI * x).sin().exp(),
            Self::Williams => 0.01 + 0.25 * (1.0 - (2.5 * x).sin()).powi(2),
        }
    }

    /// `(y_hf, y_lf)` at `x`.
    pub fn generate<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (f64, f64) {
        let mu = self.mean(x);
        let eps = Normal::new(0.0, self.noise_sd(x)).expect("positive noise").sample(rng);
        (mu + eps, mu)
    }
}
