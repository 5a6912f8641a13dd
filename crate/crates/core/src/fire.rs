//! FIRE: a base surrogate over the aggregated low-fidelity data, and a
//! residual surrogate that sees the base model's predictive distribution at
//! each high-fidelity input.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{append_token, MultiFidelityDataset};
use crate::error::{Error, Result};
use crate::model::{MfPrediction, MultiFidelityModel};
use crate::summary::{PredictiveSummary, QuantileLevels};
use crate::surrogate::{ConstantSurrogate, SharedFactory, Surrogate, SurrogateFactory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationMode {
    /// Mean, variance and every quantile.
    #[default]
    Full,
    MeanVariance,
    MeanOnly,
    /// No distributional features.
    None,
}

impl AugmentationMode {
    pub fn appended_columns(&self, levels: &QuantileLevels) -> usize {
        match self {
            Self::Full => 2 + levels.len(),
            Self::MeanVariance => 2,
            Self::MeanOnly => 1,
            Self::None => 0,
        }
    }
}

/// `[x.., token, mu, sigma^2, q ascending]`, truncated according to `mode`.
pub fn build_augmented_features(
    x_tok: &DMatrix<f64>,
    summary: &PredictiveSummary,
    mode: AugmentationMode,
) -> Result<DMatrix<f64>> {
    if summary.len() != x_tok.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x_tok.nrows(),
            got: summary.len(),
        });
    }
    let m = summary.quantiles().ncols();
    let extra = match mode {
        AugmentationMode::Full => 2 + m,
        AugmentationMode::MeanVariance => 2,
        AugmentationMode::MeanOnly => 1,
        AugmentationMode::None => 0,
    };
    let p = x_tok.ncols();
    let mut z = x_tok.clone().resize_horizontally(p + extra, 0.0);
    for i in 0..z.nrows() {
        if extra >= 1 {
            z[(i, p)] = summary.mean()[i];
        }
        if extra >= 2 {
            z[(i, p + 1)] = summary.variance()[i];
        }
        for k in 0..extra.saturating_sub(2) {
            z[(i, p + 2 + k)] = summary.quantiles()[(i, k)];
        }
    }
    Ok(z)
}

/// Per-stage learners and the augmentation scheme.
#[derive(Clone)]
pub struct FireSpec {
    pub base: SharedFactory,
    pub residual: SharedFactory,
    pub mode: AugmentationMode,
    pub levels: QuantileLevels,
}

impl FireSpec {
    /// The same learner for both stages.
    pub fn uniform(factory: SharedFactory, mode: AugmentationMode) -> Self {
        Self {
            base: factory.clone(),
            residual: factory,
            mode,
            levels: QuantileLevels::default(),
        }
    }
}

/// Training set of a residual stage.
#[derive(Debug, Clone)]
pub struct AugmentedData {
    pub z: DMatrix<f64>,
    pub r: DVector<f64>,
}

fn fit_residual(
    factory: &dyn SurrogateFactory,
    data: &AugmentedData,
    base: &PredictiveSummary,
    seed: u64,
) -> Result<Box<dyn Surrogate>> {
    if data.r.len() == 1 {
        return Ok(Box::new(ConstantSurrogate {
            dim: data.z.ncols(),
            mean: data.r[0],
            variance: base.variance()[0],
        }));
    }
    factory
        .fit(&data.z, &data.r, seed)
        .map_err(|e| e.in_stage("residual"))
}

/// Shifts a summary by an additive correction whose variance is added.
fn compose(prev: &PredictiveSummary, correction: &PredictiveSummary) -> Result<PredictiveSummary> {
    let mean = prev.mean() + correction.mean();
    let variance = prev.variance() + correction.variance();
    let mut quantiles = prev.quantiles().clone();
    for (i, mut row) in quantiles.row_iter_mut().enumerate() {
        row.add_scalar_mut(correction.mean()[i]);
    }
    PredictiveSummary::new(mean, variance, quantiles)
}

/// Result of [`FireModel::predict`] with both stage summaries.
#[derive(Debug, Clone)]
pub struct FirePrediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub base: PredictiveSummary,
    pub residual: PredictiveSummary,
}

pub struct FireModel {
    base: Box<dyn Surrogate>,
    residual: Box<dyn Surrogate>,
    mode: AugmentationMode,
    levels: QuantileLevels,
    top: usize,
    dim: usize,
    train: AugmentedData,
}

impl FireModel {
    pub fn mode(&self) -> AugmentationMode {
        self.mode
    }

    pub fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    pub fn residual_input_dim(&self) -> usize {
        self.residual.input_dim()
    }

    /// The `(z_aug, r)` pairs the residual surrogate was fitted on.
    pub fn residual_training_data(&self) -> &AugmentedData {
        &self.train
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<FirePrediction> {
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let x_tok = append_token(x, self.top);
        let base = self.base.predict(&x_tok, &self.levels)?;
        let z = build_augmented_features(&x_tok, &base, self.mode)?;
        let residual = self.residual.predict(&z, &self.levels)?;
        Ok(FirePrediction {
            mean: base.mean() + residual.mean(),
            variance: base.variance() + residual.variance(),
            base,
            residual,
        })
    }
}

impl MultiFidelityModel for FireModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict_high(&self, x: &DMatrix<f64>) -> Result<MfPrediction> {
        let p = self.predict(x)?;
        Ok(MfPrediction {
            mean: p.mean,
            variance: p.variance,
        })
    }
}

/// Fits the base on all lower fidelities (tokenised) and the residual model
/// on the highest fidelity. The residual stage uses `seed + 1`.
pub fn fire_fit(data: &MultiFidelityDataset, spec: &FireSpec, seed: u64) -> Result<FireModel> {
    let (lf, hf) = data.aggregate_bilevel()?;
    let base = spec
        .base
        .fit(&lf.x, &lf.y, seed)
        .map_err(|e| e.in_stage("base"))?;
    let base_hf = base.predict(&hf.x, &spec.levels)?;
    let train = AugmentedData {
        z: build_augmented_features(&hf.x, &base_hf, spec.mode)?,
        r: &hf.y - base_hf.mean(),
    };
    let residual = fit_residual(spec.residual.as_ref(), &train, &base_hf, seed.wrapping_add(1))?;
    Ok(FireModel {
        base,
        residual,
        mode: spec.mode,
        levels: spec.levels.clone(),
        top: data.top_fidelity(),
        dim: data.dim(),
        train,
    })
}

/// A chain with one residual stage per fidelity step.
pub struct RecursiveFireModel {
    base: Box<dyn Surrogate>,
    stages: Vec<(usize, Box<dyn Surrogate>)>,
    base_token: usize,
    mode: AugmentationMode,
    levels: QuantileLevels,
    dim: usize,
    stage_data: Vec<AugmentedData>,
}

impl RecursiveFireModel {
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stage_training_data(&self) -> &[AugmentedData] {
        &self.stage_data
    }

    /// Summaries after the base and after every residual stage; the last one
    /// is the prediction at the highest fidelity.
    pub fn predict_chain(&self, x: &DMatrix<f64>) -> Result<Vec<PredictiveSummary>> {
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let mut chain = vec![self.base.predict(&append_token(x, self.base_token), &self.levels)?];
        for (token, stage) in &self.stages {
            let prev = chain.last().expect("chain starts with the base");
            let z = build_augmented_features(&append_token(x, *token), prev, self.mode)?;
            let correction = stage.predict(&z, &self.levels)?;
            chain.push(compose(prev, &correction)?);
        }
        Ok(chain)
    }

    /// Variance contributed by each model in the chain.
    pub fn stage_variances(&self, x: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
        let chain = self.predict_chain(x)?;
        let mut out = vec![chain[0].variance().clone()];
        for w in chain.windows(2) {
            out.push(w[1].variance() - w[0].variance());
        }
        Ok(out)
    }
}

impl MultiFidelityModel for RecursiveFireModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict_high(&self, x: &DMatrix<f64>) -> Result<MfPrediction> {
        let last = self.predict_chain(x)?.pop().expect("non-empty chain");
        Ok(MfPrediction {
            mean: last.mean().clone(),
            variance: last.variance().clone(),
        })
    }
}

/// Base on the lowest fidelity; stage `k` corrects the chain at fidelity
/// `k + 1` and is fitted with `seed + k`.
pub fn fire_fit_recursive(
    data: &MultiFidelityDataset,
    spec: &FireSpec,
    seed: u64,
) -> Result<RecursiveFireModel> {
    let blocks = data.blocks();
    if blocks.len() < 2 {
        return Err(Error::TooFewFidelities);
    }
    let first = &blocks[0];
    let base = spec
        .base
        .fit(&append_token(first.x(), first.fidelity()), first.y(), seed)
        .map_err(|e| e.in_stage("base"))?;
    let mut model = RecursiveFireModel {
        base,
        stages: Vec::new(),
        base_token: first.fidelity(),
        mode: spec.mode,
        levels: spec.levels.clone(),
        dim: data.dim(),
        stage_data: Vec::new(),
    };
    for (k, block) in blocks.iter().enumerate().skip(1) {
        let prev = model.predict_chain(block.x())?.pop().expect("non-empty chain");
        let x_tok = append_token(block.x(), block.fidelity());
        let train = AugmentedData {
            z: build_augmented_features(&x_tok, &prev, spec.mode)?,
            r: block.y() - prev.mean(),
        };
        let stage = fit_residual(spec.residual.as_ref(), &train, &prev, seed.wrapping_add(k as u64))?;
        model.stages.push((block.fidelity(), stage));
        model.stage_data.push(train);
    }
    Ok(model)
}
