//! Classical autoregressive multi-fidelity baselines. Every method chains
//! stages `t = 2..T` on top of a surrogate fitted to the lowest fidelity,
//! using the previous chain's predictive mean at the current stage's inputs,
//! so HF and LF designs need not be nested.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::MultiFidelityDataset;
use crate::error::{Error, Result};
use crate::model::{MfPrediction, MultiFidelityModel};
use crate::summary::QuantileLevels;
use crate::surrogate::{Surrogate, SurrogateFactory};

fn mean_variance(s: &dyn Surrogate, x: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let summary = s.predict(x, &QuantileLevels::new(vec![0.5])?)?;
    Ok((summary.mean().clone(), summary.variance().clone()))
}

fn check_width(expected: usize, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}

fn fit_lowest(
    data: &MultiFidelityDataset,
    factory: &dyn SurrogateFactory,
    seed: u64,
) -> Result<Box<dyn Surrogate>> {
    let first = &data.blocks()[0];
    factory.fit(first.x(), first.y(), seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoRule {
    /// `rho = sum(y mu) / sum(mu^2)` against the lower chain's mean.
    LeastSquares,
    Fixed(f64),
}

pub struct Ar1Stage {
    pub rho: f64,
    /// Discrepancy targets `y - rho * mu_lower` the stage was fitted on.
    pub targets: DVector<f64>,
    delta: Box<dyn Surrogate>,
}

/// `f_t = rho_t f_{t-1} + delta_t`.
pub struct Ar1Model {
    lowest: Box<dyn Surrogate>,
    stages: Vec<Ar1Stage>,
    dim: usize,
}

impl Ar1Model {
    pub fn stages(&self) -> &[Ar1Stage] {
        &self.stages
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.rho).collect()
    }

    /// Mean and variance after the first `depth` stages (0 = lowest fidelity).
    pub fn predict_depth(&self, x: &DMatrix<f64>, depth: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        check_width(self.dim, x)?;
        let (mut mean, mut var) = mean_variance(self.lowest.as_ref(), x)?;
        for stage in self.stages.iter().take(depth) {
            let (md, vd) = mean_variance(stage.delta.as_ref(), x)?;
            mean = mean * stage.rho + md;
            var = var * (stage.rho * stage.rho) + vd;
        }
        Ok((mean, var))
    }
}

impl MultiFidelityModel for Ar1Model {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict_high(&self, x: &DMatrix<f64>) -> Result<MfPrediction> {
        let (mean, variance) = self.predict_depth(x, self.stages.len())?;
        Ok(MfPrediction { mean, variance })
    }
}

pub fn least_squares_rho(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let denom = mu.norm_squared();
    if denom == 0.0 {
        log::warn!("lower-fidelity means are all zero; using rho = 0");
        return 0.0;
    }
    y.dot(mu) / denom
}

/// Stage `k` (0 = lowest fidelity) is fitted with `seed + k`.
pub fn ar1_fit_with(
    data: &MultiFidelityDataset,
    factory: &dyn SurrogateFactory,
    rule: RhoRule,
    seed: u64,
) -> Result<Ar1Model> {
    let mut model = Ar1Model {
        lowest: fit_lowest(data, factory, seed)?,
        stages: Vec::new(),
        dim: data.dim(),
    };
    for (k, block) in data.blocks().iter().enumerate().skip(1) {
        let (mu, _) = model.predict_depth(block.x(), k - 1)?;
        let rho = match rule {
            RhoRule::LeastSquares => least_squares_rho(block.y(), &mu),
            RhoRule::Fixed(r) => r,
        };
        let targets = block.y() - &mu * rho;
        let delta = factory.fit(block.x(), &targets, seed.wrapping_add(k as u64))?;
        model.stages.push(Ar1Stage { rho, targets, delta });
    }
    Ok(model)
}

pub fn ar1_fit(data: &MultiFidelityDataset, factory: &dyn SurrogateFactory, seed: u64) -> Result<Ar1Model> {
    ar1_fit_with(data, factory, RhoRule::LeastSquares, seed)
}

/// AR(1) with every `rho` fixed to 1.
pub fn resgp_fit(data: &MultiFidelityDataset, factory: &dyn SurrogateFactory, seed: u64) -> Result<Ar1Model> {
    ar1_fit_with(data, factory, RhoRule::Fixed(1.0), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Propagation {
    /// Feed the lower posterior mean into the next stage.
    #[default]
    Mean,
    /// Average the next stage over `samples` draws from the lower
    /// Gaussian marginal and pool by the law of total variance.
    MonteCarlo { samples: usize },
}

/// Stage `t` models `y_t` as a function of `[x, mu_{t-1}(x)]`.
pub struct NargpModel {
    lowest: Box<dyn Surrogate>,
    stages: Vec<Box<dyn Surrogate>>,
    propagation: Propagation,
    seed: u64,
    dim: usize,
}

fn with_column(x: &DMatrix<f64>, col: &DVector<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut out = x.clone().resize_horizontally(p + 1, 0.0);
    out.set_column(p, col);
    out
}

impl NargpModel {
    pub fn stage_input_dims(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.input_dim()).collect()
    }

    pub fn with_propagation(mut self, propagation: Propagation) -> Self {
        self.propagation = propagation;
        self
    }

    fn predict_depth(&self, x: &DMatrix<f64>, depth: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        check_width(self.dim, x)?;
        let (mut mean, mut var) = mean_variance(self.lowest.as_ref(), x)?;
        for (k, stage) in self.stages.iter().take(depth).enumerate() {
            (mean, var) = match self.propagation {
                Propagation::Mean => mean_variance(stage.as_ref(), &with_column(x, &mean))?,
                Propagation::MonteCarlo { samples } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(k as u64));
                    self.propagate_samples(stage.as_ref(), x, &mean, &var, samples.max(1), &mut rng)?
                }
            };
        }
        Ok((mean, var))
    }

    fn propagate_samples(
        &self,
        stage: &dyn Surrogate,
        x: &DMatrix<f64>,
        mean: &DVector<f64>,
        var: &DVector<f64>,
        samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = x.nrows();
        let sd = var.map(f64::sqrt);
        let mut sum_mean = DVector::zeros(n);
        let mut sum_sq = DVector::zeros(n);
        let mut sum_var = DVector::zeros(n);
        for _ in 0..samples {
            let draw = DVector::from_fn(n, |i, _| {
                let z: f64 = StandardNormal.sample(rng);
                mean[i] + sd[i] * z
            });
            let (m, v) = mean_variance(stage, &with_column(x, &draw))?;
            sum_sq += m.component_mul(&m);
            sum_mean += m;
            sum_var += v;
        }
        let s = samples as f64;
        let pooled_mean = &sum_mean / s;
        let spread = (&sum_sq / s - pooled_mean.component_mul(&pooled_mean)).map(|v| v.max(0.0));
        Ok((pooled_mean, &sum_var / s + spread))
    }
}

impl MultiFidelityModel for NargpModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict_high(&self, x: &DMatrix<f64>) -> Result<MfPrediction> {
        let (mean, variance) = self.predict_depth(x, self.stages.len())?;
        Ok(MfPrediction { mean, variance })
    }
}

/// Stages are trained on mean-propagated inputs regardless of the
/// prediction-time propagation.
pub fn nargp_fit(
    data: &MultiFidelityDataset,
    factory: &dyn SurrogateFactory,
    propagation: Propagation,
    seed: u64,
) -> Result<NargpModel> {
    let mut model = NargpModel {
        lowest: fit_lowest(data, factory, seed)?,
        stages: Vec::new(),
        propagation: Propagation::Mean,
        seed,
        dim: data.dim(),
    };
    for (k, block) in data.blocks().iter().enumerate().skip(1) {
        let (mu, _) = model.predict_depth(block.x(), k - 1)?;
        let stage = factory.fit(&with_column(block.x(), &mu), block.y(), seed.wrapping_add(k as u64))?;
        model.stages.push(stage);
    }
    Ok(model.with_propagation(propagation))
}
