//! Nonparametric estimate of the Bayes risk `E[(r - E[r | Z])^2]` by
//! partitioning on equal-mass bins of the conditioning columns.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_ORACLE_SAMPLES: usize = 10_000;
pub const MIN_CELL_SIZE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub mse: f64,
    /// Monte-Carlo standard error of `mse`.
    pub stderr: f64,
    /// Cells left after merging.
    pub cells: usize,
}

/// Bin index per sample; tied values share a bin.
fn equal_mass_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut prev: Option<(f64, usize)> = None;
    for (rank, &i) in order.iter().enumerate() {
        let bin = match prev {
            Some((v, b)) if v == values[i] => b,
            _ => rank * bins / n,
        };
        out[i] = bin;
        prev = Some((values[i], bin));
    }
    out
}

/// Uses `ceil(n^(1 / (2 + p)))` bins per column for `p` conditioning
/// columns. Cells with fewer than [`MIN_CELL_SIZE`] samples are merged with
/// their lexicographic successors. Within-cell variances use the unbiased
/// `1 / (n_c - 1)` normalisation.
pub fn oracle_conditional_mse(
    features: &DMatrix<f64>,
    columns: &[usize],
    r: &DVector<f64>,
) -> Result<OracleEstimate> {
    let n = r.len();
    if features.nrows() != n {
        return Err(Error::InvalidInput(format!("{} feature rows for {n} residuals", features.nrows())));
    }
    if n < MIN_ORACLE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "the risk oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n}"
        )));
    }
    if let Some(&bad) = columns.iter().find(|&&c| c >= features.ncols()) {
        return Err(Error::InvalidInput(format!("no feature column {bad}")));
    }
    let p = columns.len();
    let bins = (n as f64).powf(1.0 / (2 + p) as f64).ceil() as usize;
    let per_column: Vec<Vec<usize>> = columns
        .iter()
        .map(|&c| equal_mass_bins(features.column(c).as_slice(), bins))
        .collect();

    let mut cells: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key: Vec<usize> = per_column.iter().map(|b| b[i]).collect();
        cells.entry(key).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    for members in cells.into_values() {
        pending.extend(members);
        if pending.len() >= MIN_CELL_SIZE {
            groups.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(pending),
            None => groups.push(pending),
        }
    }

    let mut contrib = Vec::with_capacity(n);
    for g in &groups {
        let m = g.len() as f64;
        let mean = g.iter().map(|&i| r[i]).sum::<f64>() / m;
        let correction = if g.len() > 1 { m / (m - 1.0) } else { 1.0 };
        contrib.extend(g.iter().map(|&i| (r[i] - mean).powi(2) * correction));
    }
    let nf = n as f64;
    let mse = contrib.iter().sum::<f64>() / nf;
    let var = contrib.iter().map(|c| (c - mse).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(OracleEstimate {
        mse,
        stderr: (var / nf).sqrt(),
        cells: groups.len(),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn sample(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>());
        let r = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        (f, r)
    }

    #[test]
    fn independent_residuals_give_variance() {
        let (f, r) = sample(20_000, 0);
        let mean = r.mean();
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
        for cols in [vec![], vec![0], vec![0, 1], vec![0, 1, 2]] {
            let e = oracle_conditional_mse(&f, &cols, &r).unwrap();
            assert!((e.mse - var).abs() < 3.0 * e.stderr, "{cols:?}: {} vs {var}", e.mse);
        }
    }

    #[test]
    fn residual_equal_to_a_column_is_explained() {
        let (mut f, _) = sample(20_000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        f.column_mut(1).iter_mut().for_each(|v| *v += 0.5);
        let r = f.column(1).into_owned();
        f.column_mut(0).iter_mut().for_each(|v| *v = rng.random());
        let var = r.variance();
        let with = oracle_conditional_mse(&f, &[0, 1], &r).unwrap();
        let without = oracle_conditional_mse(&f, &[0], &r).unwrap();
        assert!(with.mse < 0.01 * var, "{}", with.mse);
        assert!((without.mse - var).abs() < 0.05 * var);
    }

    #[test]
    fn bins_are_equal_mass_and_ties_share() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b = equal_mass_bins(&v, 4);
        for k in 0..4 {
            assert_eq!(b.iter().filter(|&&x| x == k).count(), 25);
        }
        let b = equal_mass_bins(&[1.0; 50], 5);
        assert!(b.iter().all(|&x| x == 0));
    }

    #[test]
    fn small_cells_are_merged() {
        let (f, r) = sample(10_000, 3);
        let e = oracle_conditional_mse(&f, &[0, 1, 2], &r).unwrap();
        // 10 bins per column give 1000 raw cells of about 10 samples.
        assert!(e.cells <= 10_000 / MIN_CELL_SIZE);
    }

    #[test]
    fn rejects_small_samples() {
        let (f, r) = sample(10_000, 0);
        let f = f.rows(0, 500).into_owned();
        let r = r.rows(0, 500).into_owned();
        assert!(oracle_conditional_mse(&f, &[0], &r).is_err());
    }
}
