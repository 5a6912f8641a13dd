use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lhs::sample_lhs_with;
use super::Problem;
use crate::data::{FidelityBlock, MultiFidelityDataset};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Every fidelity and the test set are drawn independently and share no
    /// input rows.
    #[default]
    Disjoint,
    /// Each fidelity's inputs are a subset of the next lower fidelity's.
    Nested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub ratio_percent: f64,
    pub design: Design,
    pub fold: usize,
    pub seed: u64,
    /// Overrides the problem's lower-fidelity sizes.
    pub lf_sizes: Option<Vec<usize>>,
    /// Overrides the ratio-derived high-fidelity size.
    pub n_hf: Option<usize>,
    pub n_test: Option<usize>,
}

impl SplitPlan {
    pub fn new(ratio_percent: f64, design: Design, fold: usize, seed: u64) -> Self {
        Self {
            ratio_percent,
            design,
            fold,
            seed,
            lf_sizes: None,
            n_hf: None,
            n_test: None,
        }
    }

    /// Sizes of fidelities `1..=T` and of the test set.
    pub fn sizes(&self, problem: &Problem) -> Result<(Vec<usize>, usize)> {
        let mut sizes = self.lf_sizes.clone().unwrap_or_else(|| problem.lf_sizes.clone());
        if sizes.len() != problem.fidelities - 1 {
            return Err(Error::InvalidInput(format!(
                "{} needs {} lower-fidelity sizes, got {}",
                problem.name,
                problem.fidelities - 1,
                sizes.len()
            )));
        }
        sizes.push(match self.n_hf {
            Some(n) => n,
            None => problem.hf_size(self.ratio_percent)?,
        });
        if sizes.contains(&0) {
            return Err(Error::InvalidInput("every fidelity needs at least one point".into()));
        }
        let n_test = self.n_test.unwrap_or(sizes[0] / 2).max(1);
        Ok((sizes, n_test))
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: MultiFidelityDataset,
    pub test_x: DMatrix<f64>,
    pub test_y: DVector<f64>,
}

fn row_key(x: &DMatrix<f64>, i: usize) -> Vec<u64> {
    x.row(i).iter().map(|v| v.to_bits()).collect()
}

/// Fresh LHS designs until none of its rows is already in `taken`.
fn fresh_design(
    n: usize,
    problem: &Problem,
    taken: &mut HashSet<Vec<u64>>,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    loop {
        let x = sample_lhs_with(n, &problem.bounds, rng);
        let keys: Vec<Vec<u64>> = (0..n).map(|i| row_key(&x, i)).collect();
        let unique: HashSet<&Vec<u64>> = keys.iter().collect();
        if unique.len() == n && keys.iter().all(|k| !taken.contains(k)) {
            taken.extend(keys);
            return x;
        }
    }
}

/// Training data and test set for one fold. Deterministic in
/// `(plan.seed, plan.fold)`.
pub fn make_splits(problem: &Problem, plan: &SplitPlan) -> Result<Split> {
    let (sizes, n_test) = plan.sizes(problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(plan.seed, plan.fold as u64));
    let mut taken = HashSet::new();
    let mut designs: Vec<DMatrix<f64>> = Vec::with_capacity(sizes.len());
    for (k, &n) in sizes.iter().enumerate() {
        let x = match (plan.design, k) {
            (Design::Disjoint, _) | (Design::Nested, 0) => fresh_design(n, problem, &mut taken, &mut rng),
            (Design::Nested, _) => {
                let prev = &designs[k - 1];
                if n > prev.nrows() {
                    return Err(Error::InvalidInput(format!(
                        "nested design needs fidelity {} ({n} points) within fidelity {} ({} points)",
                        k + 1,
                        k,
                        prev.nrows()
                    )));
                }
                let mut idx = sample(&mut rng, prev.nrows(), n).into_vec();
                idx.sort_unstable();
                prev.select_rows(&idx)
            }
        };
        designs.push(x);
    }
    let test_x = fresh_design(n_test, problem, &mut taken, &mut rng);

    let mut blocks = Vec::with_capacity(designs.len());
    for (k, x) in designs.into_iter().enumerate() {
        let y = problem.observe(&x, k + 1, &mut rng)?;
        blocks.push(FidelityBlock::new(k + 1, x, y)?);
    }
    let test_y = problem.observe(&test_x, problem.fidelities, &mut rng)?;
    Ok(Split {
        train: MultiFidelityDataset::new(blocks)?,
        test_x,
        test_y,
    })
}
