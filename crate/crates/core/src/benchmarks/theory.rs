//! Synthetic residual processes and the empirical risk checks run on them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hetero::Heteroscedastic;
use super::lhs::sample_lhs_with;
use super::oracle::{oracle_conditional_mse, OracleEstimate};
use crate::error::{Error, Result};
use crate::gp::GpFactory;
use crate::seed;

/// Base-model features and the residual to explain.
#[derive(Debug, Clone)]
pub struct ResidualSample {
    pub columns: Vec<&'static str>,
    pub features: DMatrix<f64>,
    pub residual: DVector<f64>,
}

impl ResidualSample {
    pub fn column(&self, name: &str) -> usize {
        self.columns
            .iter()
            .position(|c| *c == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    }

    pub fn select(&self, names: &[&str]) -> Vec<usize> {
        names.iter().map(|n| self.column(n)).collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Goldberg problem with a GP base fitted on 30 noiseless low-fidelity
/// points. Columns `x, mu, var`; `r = y_hf - mu`.
pub fn goldberg_residuals(n: usize, seed: u64) -> Result<ResidualSample> {
    let p = Heteroscedastic::Goldberg;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_lf = sample_lhs_with(30, &[(0.0, 1.0)], &mut rng);
    let y_lf = x_lf.column(0).map(|x| p.mean(x));
    let base = GpFactory::default().fit_gp(&x_lf, &y_lf, seed)?;
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
    let (mu, var) = base.predict_mean_variance(&x)?;
    let residual = DVector::from_fn(n, |i, _| p.generate(x[(i, 0)], &mut rng).0 - mu[i]);
    let mut features = x.resize_horizontally(3, 0.0);
    features.set_column(1, &mu);
    features.set_column(2, &var);
    Ok(ResidualSample {
        columns: vec!["x", "mu", "var"],
        features,
        residual,
    })
}

/// Rows of `x ~ U(0, 1)`, `mu = sin(2 pi x)`, `var ~ U(0.5, 1.5)`.
fn mean_variance_frame(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(n, 3);
    for i in 0..n {
        let x: f64 = rng.random();
        f[(i, 0)] = x;
        f[(i, 1)] = (2.0 * std::f64::consts::PI * x).sin();
        f[(i, 2)] = rng.random_range(0.5..1.5);
    }
    f
}

/// Residuals independent of every feature.
pub fn independent_residuals(n: usize, seed: u64) -> ResidualSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = mean_variance_frame(n, &mut rng);
    let residual = DVector::from_fn(n, |_, _| normal(&mut rng));
    ResidualSample {
        columns: vec!["x", "mu", "var"],
        features,
        residual,
    }
}

/// `r = var + sqrt(var) * eps` with `var` independent of `x` and `mu`.
pub fn variance_coupled_residuals(n: usize, seed: u64) -> ResidualSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = mean_variance_frame(n, &mut rng);
    let residual = DVector::from_fn(n, |i, _| {
        let v = features[(i, 2)];
        v + v.sqrt() * normal(&mut rng)
    });
    ResidualSample {
        columns: vec!["x", "mu", "var"],
        features,
        residual,
    }
}

/// Median of the standardized lognormal with shape `gamma`.
fn skewed_median(gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    (1.0 - (g2 / 2.0).exp()) / ((g2.exp() - 1.0) * g2.exp()).sqrt()
}

/// Base predictive distributions from a standardized lognormal family whose
/// shape varies independently of mean and variance. The residual is the
/// offset between the median and the mean plus small noise. Columns
/// `mu, var, q50`.
pub fn skewed_residuals(n: usize, seed: u64) -> ResidualSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = DMatrix::zeros(n, 3);
    let mut residual = DVector::zeros(n);
    for i in 0..n {
        let x: f64 = rng.random();
        let mu = 0.05 * (2.0 * std::f64::consts::PI * x).sin();
        let var: f64 = rng.random_range(0.5..1.5);
        let gamma: f64 = rng.random_range(0.1..1.0);
        let q50 = mu + var.sqrt() * skewed_median(gamma);
        features[(i, 0)] = mu;
        features[(i, 1)] = var;
        features[(i, 2)] = q50;
        residual[i] = q50 - mu + 0.05 * normal(&mut rng);
    }
    ResidualSample {
        columns: vec!["mu", "var", "q50"],
        features,
        residual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// `richer <= poorer + 2 se`.
    NoWorse,
    /// `richer < poorer - 2 se`.
    StrictlyBetter,
    /// `|richer - poorer| <= 2 se`.
    Equal,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskComparison {
    pub generator: String,
    pub richer_set: Vec<String>,
    pub poorer_set: Vec<String>,
    pub richer: OracleEstimate,
    pub poorer: OracleEstimate,
    /// `sqrt(se_richer^2 + se_poorer^2)`.
    pub stderr: f64,
    pub expectation: Expectation,
    pub passed: bool,
}

pub fn compare_sets(
    generator: &str,
    sample: &ResidualSample,
    richer: &[&str],
    poorer: &[&str],
    expectation: Expectation,
) -> Result<RiskComparison> {
    let a = oracle_conditional_mse(&sample.features, &sample.select(richer), &sample.residual)?;
    let b = oracle_conditional_mse(&sample.features, &sample.select(poorer), &sample.residual)?;
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let passed = match expectation {
        Expectation::NoWorse => a.mse <= b.mse + 2.0 * se,
        Expectation::StrictlyBetter => a.mse < b.mse - 2.0 * se,
        Expectation::Equal => (a.mse - b.mse).abs() <= 2.0 * se,
    };
    let names = |s: &[&str]| s.iter().map(|c| c.to_string()).collect();
    Ok(RiskComparison {
        generator: generator.into(),
        richer_set: names(richer),
        poorer_set: names(poorer),
        richer: a,
        poorer: b,
        stderr: se,
        expectation,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoryCheck {
    RiskMonotonicity,
    QuantileRisk,
    HeteroCoupling,
}

impl TheoryCheck {
    pub const ALL: [Self; 3] = [Self::RiskMonotonicity, Self::QuantileRisk, Self::HeteroCoupling];

    pub fn name(&self) -> &'static str {
        match self {
            Self::RiskMonotonicity => "risk-monotonicity",
            Self::QuantileRisk => "quantile-risk",
            Self::HeteroCoupling => "hetero-coupling",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name).ok_or_else(|| {
            let valid: Vec<&str> = Self::ALL.iter().map(|c| c.name()).collect();
            Error::InvalidInput(format!("unknown check '{name}'; valid: {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub check: String,
    pub samples: usize,
    pub seed: u64,
    pub comparisons: Vec<RiskComparison>,
    /// Correlation between noise variance and squared cross-fidelity gaps.
    pub correlation: Option<f64>,
    pub passed: bool,
}

pub const MIN_CORRELATION: f64 = 0.2;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Correlation between `sigma(x)^2` and `(y_hf - y_lf)^2` on Goldberg.
pub fn hetero_coupling(n: usize, seed: u64) -> f64 {
    let p = Heteroscedastic::Goldberg;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut var, mut gap) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let x: f64 = rng.random();
        let (hf, lf) = p.generate(x, &mut rng);
        var.push(p.noise_sd(x).powi(2));
        gap.push((hf - lf).powi(2));
    }
    pearson(&var, &gap)
}

pub fn run_theory_check(check: TheoryCheck, samples: usize, seed: u64) -> Result<TheoryReport> {
    let sub = |k: u64| seed::mix(seed, k);
    let mut comparisons = Vec::new();
    let mut correlation = None;
    match check {
        TheoryCheck::RiskMonotonicity => {
            let aug = ["x", "mu", "var"];
            let mean = ["x", "mu"];
            comparisons.push(compare_sets(
                "goldberg",
                &goldberg_residuals(samples, sub(0))?,
                &aug,
                &mean,
                Expectation::NoWorse,
            )?);
            comparisons.push(compare_sets(
                "variance-coupled",
                &variance_coupled_residuals(samples, sub(1)),
                &aug,
                &mean,
                Expectation::StrictlyBetter,
            )?);
            comparisons.push(compare_sets(
                "independent",
                &independent_residuals(samples, sub(2)),
                &aug,
                &mean,
                Expectation::Equal,
            )?);
        }
        TheoryCheck::QuantileRisk => {
            comparisons.push(compare_sets(
                "skewed",
                &skewed_residuals(samples, sub(3)),
                &["mu", "var", "q50"],
                &["mu", "var"],
                Expectation::StrictlyBetter,
            )?);
        }
        TheoryCheck::HeteroCoupling => {
            correlation = Some(hetero_coupling(samples, sub(4)));
        }
    }
    let passed = comparisons.iter().all(|c| c.passed) && correlation.is_none_or(|r| r > MIN_CORRELATION);
    Ok(TheoryReport {
        check: check.name().into(),
        samples,
        seed,
        comparisons,
        correlation,
        passed,
    })
}
