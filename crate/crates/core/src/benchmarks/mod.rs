//! Benchmark problems, designs and the conditional-risk oracle.

mod concrete;
mod functions;
mod hd;
mod hetero;
mod lhs;
mod oracle;
mod splits;
pub mod theory;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use concrete::{concrete_lf, concrete_lf_rows, CONCRETE_BETA};
pub use functions::*;
pub use hd::{eval_hd, HD_DIMS};
pub use hetero::Heteroscedastic;
pub use lhs::{sample_lhs, sample_lhs_with};
pub use oracle::{oracle_conditional_mse, OracleEstimate, MIN_CELL_SIZE, MIN_ORACLE_SAMPLES};
pub use splits::{make_splits, Design, Split, SplitPlan};

use crate::error::{Error, Result};

/// High-fidelity budgets as percentages of the problem's base size.
pub const DEFAULT_RATIOS: [f64; 6] = [2.0, 4.0, 5.0, 10.0, 20.0, 25.0];

type Evaluator = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
type NoiseSd = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub dim: usize,
    /// Number of fidelity levels `T`.
    pub fidelities: usize,
    pub bounds: Vec<(f64, f64)>,
    /// Default sizes of fidelities `1..T`.
    pub lf_sizes: Vec<usize>,
    /// `N_T = round(ratio * hf_base)`.
    pub hf_base: usize,
    evaluator: Evaluator,
    /// Standard deviation of Gaussian noise on top-fidelity observations.
    noise: Option<NoiseSd>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("fidelities", &self.fidelities)
            .field("lf_sizes", &self.lf_sizes)
            .field("hf_base", &self.hf_base)
            .field("noisy", &self.noise.is_some())
            .finish()
    }
}

impl Problem {
    pub fn is_noisy(&self) -> bool {
        self.noise.is_some()
    }

    /// Noiseless value of fidelity `t` at `x`.
    pub fn eval(&self, x: &[f64], t: usize) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !(1..=self.fidelities).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "{} has fidelities 1..={}, got {t}",
                self.name, self.fidelities
            )));
        }
        Ok((self.evaluator)(x, t))
    }

    /// Observations at every row of `x`; the top fidelity carries the
    /// problem's noise, if any.
    pub fn observe<R: Rng + ?Sized>(&self, x: &DMatrix<f64>, t: usize, rng: &mut R) -> Result<DVector<f64>> {
        let mut y = DVector::zeros(x.nrows());
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            y[i] = self.eval(&row, t)?;
            if let (Some(sd), true) = (&self.noise, t == self.fidelities) {
                let z: f64 = StandardNormal.sample(rng);
                y[i] += sd(&row) * z;
            }
        }
        Ok(y)
    }

    pub fn hf_size(&self, ratio_percent: f64) -> Result<usize> {
        let n = (ratio_percent / 100.0 * self.hf_base as f64).round();
        if !(n >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "ratio {ratio_percent}% of {} gives no high-fidelity points",
                self.hf_base
            )));
        }
        Ok(n as usize)
    }

    pub fn default_test_size(&self) -> usize {
        self.lf_sizes[0] / 2
    }
}

fn two_fidelity(name: &str, bounds: Vec<(f64, f64)>, f: fn(&[f64], usize) -> f64) -> Problem {
    Problem {
        name: name.into(),
        dim: bounds.len(),
        fidelities: 2,
        bounds,
        lf_sizes: vec![200],
        hf_base: 200,
        evaluator: Arc::new(f),
        noise: None,
    }
}

fn hd_problem(d: usize) -> Problem {
    Problem {
        name: format!("hd{d}"),
        dim: d,
        fidelities: 2,
        bounds: vec![(-3.0, 3.0); d],
        lf_sizes: vec![2000],
        hf_base: 2000,
        evaluator: Arc::new(hd::hd_unchecked),
        noise: None,
    }
}

fn three_fidelity(name: &str, bounds: Vec<(f64, f64)>, f: fn(&[f64], usize) -> f64) -> Problem {
    Problem {
        name: name.into(),
        dim: bounds.len(),
        fidelities: 3,
        bounds,
        lf_sizes: vec![200, 50],
        hf_base: 2000,
        evaluator: Arc::new(f),
        noise: None,
    }
}

fn heteroscedastic(p: Heteroscedastic) -> Problem {
    Problem {
        name: p.name().into(),
        dim: 1,
        fidelities: 2,
        bounds: vec![(0.0, 1.0)],
        lf_sizes: vec![200],
        hf_base: 200,
        evaluator: Arc::new(move |x: &[f64], _t: usize| p.mean(x[0])),
        noise: Some(Arc::new(move |x: &[f64]| p.noise_sd(x[0]))),
    }
}

/// Every built-in problem.
pub fn catalog() -> Vec<Problem> {
    let mut out = vec![
        two_fidelity("bohachevsky", vec![(-5.0, 5.0); 2], bohachevsky),
        two_fidelity("booth", vec![(-10.0, 10.0); 2], booth),
        two_fidelity(
            "borehole",
            vec![
                (0.05, 0.15),
                (100.0, 50000.0),
                (63070.0, 115600.0),
                (990.0, 1110.0),
                (63.1, 116.0),
                (700.0, 820.0),
                (1120.0, 1680.0),
                (9855.0, 12045.0),
            ],
            borehole,
        ),
        two_fidelity("branin", vec![(-5.0, 10.0), (0.0, 15.0)], branin),
        two_fidelity("currin", vec![(0.0, 1.0); 2], currin),
        two_fidelity("forrester", vec![(0.0, 1.0)], forrester),
        two_fidelity("hartmann6", vec![(0.1, 1.0); 6], hartmann6),
        two_fidelity("himmelblau", vec![(-4.0, 4.0); 2], himmelblau),
        two_fidelity("park91a", vec![(1e-8, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], park91a),
        two_fidelity("park91b", vec![(0.0, 1.0); 4], park91b),
        two_fidelity("six_hump_camelback", vec![(-2.0, 2.0); 2], six_hump_camelback),
    ];
    out.extend(HD_DIMS.iter().map(|&d| hd_problem(d)));
    out.push(three_fidelity("branin3f", vec![(-5.0, 10.0), (0.0, 15.0)], branin3f));
    out.push(three_fidelity("hartmann3f", vec![(0.0, 1.0); 3], hartmann3f));
    out.extend(Heteroscedastic::ALL.into_iter().map(heteroscedastic));
    out
}

pub fn problem(name: &str) -> Result<Problem> {
    let all = catalog();
    let names: Vec<String> = all.iter().map(|p| p.name.clone()).collect();
    all.into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownProblem {
            name: name.into(),
            available: names.join(", "),
        })
}
