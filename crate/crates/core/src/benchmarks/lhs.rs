use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Latin hypercube design with one point per stratum in every dimension.
pub fn sample_lhs_with<R: Rng + ?Sized>(n: usize, bounds: &[(f64, f64)], rng: &mut R) -> DMatrix<f64> {
    let d = bounds.len();
    let mut x = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            x[(i, j)] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    x
}

pub fn sample_lhs(n: usize, bounds: &[(f64, f64)], seed: u64) -> DMatrix<f64> {
    sample_lhs_with(n, bounds, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strata_counts(x: &DMatrix<f64>, j: usize, bins: usize, lo: f64, hi: f64) -> Vec<usize> {
        let mut counts = vec![0; bins];
        for v in x.column(j).iter() {
            let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        counts
    }

    #[test]
    fn one_point_per_quarter() {
        let x = sample_lhs(4, &[(0.0, 1.0)], 3);
        assert_eq!(strata_counts(&x, 0, 4, 0.0, 1.0), vec![1; 4]);
    }

    #[test]
    fn every_dimension_is_stratified() {
        let bounds = [(0.0, 1.0), (-5.0, 10.0), (100.0, 50000.0)];
        let x = sample_lhs(10, &bounds, 8);
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            assert_eq!(strata_counts(&x, j, 10, lo, hi), vec![1; 10]);
        }
    }

    #[test]
    fn seeded() {
        let b = [(0.0, 1.0), (0.0, 2.0)];
        assert_eq!(sample_lhs(20, &b, 5), sample_lhs(20, &b, 5));
        assert_ne!(sample_lhs(20, &b, 5), sample_lhs(20, &b, 6));
    }
}
