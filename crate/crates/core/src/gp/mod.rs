//! Exact Gaussian-process regression.
//!
//! [`ExactGp`] conditions a GP with fixed hyperparameters on data through a
//! Cholesky factorisation. [`GpFactory`] implements the surrogate contract:
//! it standardizes inputs and outputs, searches hyperparameters by
//! maximising the log marginal likelihood, and de-standardizes predictions.

mod kernel;
mod optim;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kernel::{kernel_eval, GpHyperparams, KernelFamily, KernelSpec};

use crate::error::{Error, Result};
use crate::standardize::Standardizer;
use crate::summary::{clamp_variance, PredictiveSummary, QuantileLevels};
use crate::surrogate::{Surrogate, SurrogateFactory};
use kernel::{kernel_from_sq_dist, lengthscale_grad_factor, scaled_sq_dist};
use optim::{Evaluation, Lbfgs};

/// Diagonal jitter ladder tried in order on Cholesky failure.
pub const JITTER_LADDER: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const SIGNAL_BOUNDS: (f64, f64) = (1e-4, 1e4);
pub const NOISE_BOUNDS: (f64, f64) = (1e-8, 1e1);

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const PREDICT_CHUNK: usize = 4096;

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| row(x, i)).collect()
}

fn covariance(spec: &KernelSpec, hyper: &GpHyperparams, pts: &[Vec<f64>]) -> DMatrix<f64> {
    let n = pts.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hyper.signal_variance;
        for j in 0..i {
            let r2 = scaled_sq_dist(hyper, &pts[i], &pts[j]);
            let v = kernel_from_sq_dist(spec.family, hyper.signal_variance, r2);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `k + (noise + jitter) I`, escalating the jitter.
fn factor(k: &DMatrix<f64>, noise: f64) -> Result<(DMatrix<f64>, f64)> {
    for &jitter in &JITTER_LADDER {
        let mut kn = k.clone();
        for i in 0..kn.nrows() {
            kn[(i, i)] += noise + jitter;
        }
        if let Some(ch) = kn.cholesky() {
            return Ok((ch.unpack(), jitter));
        }
    }
    Err(Error::NotPositiveDefinite)
}

fn check_data(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("GP needs at least one observation".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} inputs but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("GP data must be finite".into()));
    }
    Ok(())
}

/// A GP posterior for fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct ExactGp {
    spec: KernelSpec,
    hyper: GpHyperparams,
    train: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    y: DVector<f64>,
    jitter: f64,
}

impl ExactGp {
    pub fn condition(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        spec: KernelSpec,
        hyper: GpHyperparams,
    ) -> Result<Self> {
        check_data(x, y)?;
        hyper.check(&spec, x.ncols())?;
        let train = rows(x);
        let k = covariance(&spec, &hyper, &train);
        let (chol, jitter) = factor(&k, hyper.noise_variance)?;
        let alpha = solve_chol(&chol, y);
        Ok(Self {
            spec,
            hyper,
            train,
            chol,
            alpha,
            y: y.clone(),
            jitter,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.train.first().map_or(0, Vec::len)
    }

    /// Jitter that was added on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Diagonal term actually added to the kernel matrix.
    pub fn effective_noise(&self) -> f64 {
        self.hyper.noise_variance + self.jitter
    }

    /// Lower-triangular factor `L` with `L L^T = K + effective_noise * I`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let log_det: f64 = self.chol.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.y.dot(&self.alpha) - log_det - 0.5 * n * LN_2PI
    }

    /// Posterior mean and variance of the latent function.
    pub fn predict_latent(&self, xq: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if xq.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: xq.ncols(),
            });
        }
        let m = xq.nrows();
        let n = self.train.len();
        let mut mean = DVector::zeros(m);
        let mut var = DVector::zeros(m);
        let mut start = 0;
        while start < m {
            let len = PREDICT_CHUNK.min(m - start);
            let mut cross = DMatrix::zeros(n, len);
            for q in 0..len {
                let xq_row = row(xq, start + q);
                for (i, t) in self.train.iter().enumerate() {
                    let r2 = scaled_sq_dist(&self.hyper, t, &xq_row);
                    cross[(i, q)] = kernel_from_sq_dist(self.spec.family, self.hyper.signal_variance, r2);
                }
            }
            let mu = cross.tr_mul(&self.alpha);
            let v = self
                .chol
                .solve_lower_triangular(&cross)
                .expect("Cholesky factor has a positive diagonal");
            for q in 0..len {
                mean[start + q] = mu[q];
                let explained = v.column(q).norm_squared();
                var[start + q] = clamp_variance(self.hyper.signal_variance - explained);
            }
            start += len;
        }
        Ok((mean, var))
    }

    /// Posterior predictive of a new observation: latent variance plus noise.
    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (mean, var) = self.predict_latent(xq)?;
        let noise = self.hyper.noise_variance;
        Ok((mean, var.map(|v| v + noise)))
    }
}

fn solve_chol(chol: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = chol
        .solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal");
    chol.tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has a positive diagonal")
}

/// `-1/2 y^T K_n^-1 y - 1/2 log|K_n| - n/2 log 2 pi` with
/// `K_n = K + (noise + jitter) I`.
pub fn log_marginal_likelihood(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: KernelSpec,
    hyper: GpHyperparams,
) -> Result<f64> {
    Ok(ExactGp::condition(x, y, spec, hyper)?.log_marginal_likelihood())
}

/// Log marginal likelihood and its gradient with respect to
/// `[log l.., log signal, log noise]`.
pub fn log_marginal_likelihood_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: KernelSpec,
    hyper: &GpHyperparams,
) -> Result<(f64, Vec<f64>)> {
    check_data(x, y)?;
    hyper.check(&spec, x.ncols())?;
    lml_grad_rows(&rows(x), y, &spec, hyper)
}

fn lml_grad_rows(
    pts: &[Vec<f64>],
    y: &DVector<f64>,
    spec: &KernelSpec,
    hyper: &GpHyperparams,
) -> Result<(f64, Vec<f64>)> {
    let n = pts.len();
    let d = pts[0].len();
    let k = covariance(spec, hyper, pts);
    let (chol, _) = factor(&k, hyper.noise_variance)?;
    let alpha = solve_chol(&chol, y);
    let log_det: f64 = chol.diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n as f64 * LN_2PI;

    // W = alpha alpha^T - K_n^-1; dL/dtheta = 1/2 tr(W dK/dtheta).
    let linv = chol
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("Cholesky factor has a positive diagonal");
    let kinv = linv.tr_mul(&linv);
    let w = &alpha * alpha.transpose() - kinv;

    let m = hyper.lengthscales.len();
    let mut grad = vec![0.0; m + 2];
    let mut trace_k = 0.0;
    for i in 0..n {
        trace_k += w[(i, i)] * hyper.signal_variance;
        for j in 0..i {
            let r2 = scaled_sq_dist(hyper, &pts[i], &pts[j]);
            let wij = w[(i, j)];
            trace_k += 2.0 * wij * kernel_from_sq_dist(spec.family, hyper.signal_variance, r2);
            let factor = 2.0 * wij * lengthscale_grad_factor(spec.family, hyper.signal_variance, r2);
            for a in 0..d {
                let t = (pts[i][a] - pts[j][a]) / hyper.lengthscale(a);
                let slot = if m == 1 { 0 } else { a };
                grad[slot] += factor * t * t;
            }
        }
    }
    for g in grad.iter_mut().take(m) {
        *g *= 0.5;
    }
    grad[m] = 0.5 * trace_k;
    grad[m + 1] = 0.5 * hyper.noise_variance * w.trace();
    Ok((lml, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub kernel: KernelSpec,
    /// Total likelihood evaluations across all restarts.
    pub iterations: usize,
    pub restarts: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            iterations: 200,
            restarts: 5,
        }
    }
}

fn log_bounds(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![LENGTHSCALE_BOUNDS.0.ln(); m];
    let mut hi = vec![LENGTHSCALE_BOUNDS.1.ln(); m];
    lo.push(SIGNAL_BOUNDS.0.ln());
    hi.push(SIGNAL_BOUNDS.1.ln());
    lo.push(NOISE_BOUNDS.0.ln());
    hi.push(NOISE_BOUNDS.1.ln());
    (lo, hi)
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Maximises the log marginal likelihood over log-hyperparameters within
/// the box bounds, starting from one default point and `restarts - 1`
/// log-uniform draws. Every start is screened for a short slice of the
/// budget; the best one then receives the remainder.
pub fn optimize_hyperparams(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &GpConfig,
    seed: u64,
) -> Result<GpHyperparams> {
    check_data(x, y)?;
    let pts = rows(x);
    let d = x.ncols();
    let m = config.kernel.lengthscale_count(d);
    let (lo, hi) = log_bounds(m);
    let spec = config.kernel;

    // theta = lo + (hi - lo) * sigmoid(u)
    let to_theta = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &v)| lo[i] + (hi[i] - lo[i]) * sigmoid(v))
            .collect()
    };
    let to_u = |theta: &[f64]| -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let p = ((t - lo[i]) / (hi[i] - lo[i])).clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            })
            .collect()
    };
    let mut eval = |u: &[f64]| -> Evaluation {
        let theta = to_theta(u);
        let hyper = GpHyperparams::from_log(&theta);
        let (lml, grad) = lml_grad_rows(&pts, y, &spec, &hyper).ok()?;
        if !lml.is_finite() {
            return None;
        }
        let g = grad
            .iter()
            .zip(u)
            .enumerate()
            .map(|(i, (gt, &ui))| {
                let s = sigmoid(ui);
                -gt * (hi[i] - lo[i]) * s * (1.0 - s)
            })
            .collect();
        Some((-lml, g))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(config.restarts.max(1));
    let default_start = GpHyperparams {
        lengthscales: vec![(d.max(1) as f64).sqrt(); m],
        signal_variance: 1.0,
        noise_variance: 1e-2,
    };
    starts.push(default_start.to_log());
    for _ in 1..config.restarts.max(1) {
        starts.push((0..m + 2).map(|i| rng.random_range(lo[i]..hi[i])).collect());
    }

    let mut budget = config.iterations.max(1);
    let screen = (budget / (4 * starts.len())).max(1);
    let mut runs: Vec<Lbfgs> = Vec::new();
    for theta in &starts {
        if budget == 0 {
            break;
        }
        let mut slice = screen.min(budget);
        let taken = slice;
        if let Some(mut opt) = Lbfgs::start(to_u(theta), &mut eval, &mut slice) {
            opt.run(&mut eval, &mut slice);
            runs.push(opt);
        }
        budget -= taken - slice;
    }
    let best = runs
        .into_iter()
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or(Error::NotPositiveDefinite)?;
    let mut best = best;
    if !best.converged() {
        best.run(&mut eval, &mut budget);
    }
    Ok(GpHyperparams::from_log(&to_theta(&best.x)))
}

/// A GP fitted on standardized data; predictions are reported in original
/// units. Input columns that are constant over the training set carry no
/// information and are left out of the kernel.
#[derive(Debug, Clone)]
pub struct FittedGp {
    standardizer: Standardizer,
    active: Vec<usize>,
    gp: ExactGp,
}

fn varying_columns(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| {
            let c = x.column(j);
            c.iter().any(|&v| v != c[0])
        })
        .collect()
}

impl FittedGp {
    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Input columns the kernel sees.
    pub fn active_columns(&self) -> &[usize] {
        &self.active
    }

    /// The underlying posterior in standardized space over the active columns.
    pub fn gp(&self) -> &ExactGp {
        &self.gp
    }

    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn kernel_inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.standardizer.apply_x(x).select_columns(&self.active)
    }

    pub fn predict_mean_variance(&self, x: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let (m, v) = self.gp.predict(&self.kernel_inputs(x))?;
        Ok((self.standardizer.invert_y(&m), self.standardizer.invert_variance(&v)))
    }
}

impl Surrogate for FittedGp {
    fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn predict(&self, x: &DMatrix<f64>, levels: &QuantileLevels) -> Result<PredictiveSummary> {
        let (mean, var) = self.predict_mean_variance(x)?;
        Ok(PredictiveSummary::gaussian(mean, var, levels))
    }
}

#[derive(Debug, Clone, Default)]
pub struct GpFactory {
    pub config: GpConfig,
}

impl GpFactory {
    pub fn new(config: GpConfig) -> Self {
        Self { config }
    }

    pub fn fit_gp(&self, x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<FittedGp> {
        check_data(x, y)?;
        let standardizer = Standardizer::fit(x, y);
        let active = varying_columns(x);
        let xs = standardizer.apply_x(x).select_columns(&active);
        let ys = standardizer.apply_y(y);
        let hyper = optimize_hyperparams(&xs, &ys, &self.config, seed)?;
        let gp = ExactGp::condition(&xs, &ys, self.config.kernel, hyper)?;
        Ok(FittedGp {
            standardizer,
            active,
            gp,
        })
    }
}

impl SurrogateFactory for GpFactory {
    fn name(&self) -> &str {
        "gp"
    }

    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<Box<dyn Surrogate>> {
        Ok(Box::new(self.fit_gp(x, y, seed)?))
    }
}
