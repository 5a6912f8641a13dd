use approx::assert_relative_eq;
use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rec(problem: &str, ratio: f64, fold: usize, trial: usize, algorithm: &str, loss: f64) -> MetricRecord {
    MetricRecord {
        problem: problem.into(),
        ratio,
        fold,
        trial,
        algorithm: algorithm.into(),
        nrmse: loss,
        nll: loss,
        r2: 1.0 - loss,
        runtime_seconds: 1.0,
    }
}

#[test]
fn pointwise_examples() {
    let y = dvector![0.0, 2.0];
    assert_eq!(nrmse(&y, &y).unwrap(), 0.0);
    assert_relative_eq!(nrmse(&y, &dvector![1.0, 1.0]).unwrap(), 0.5, max_relative = 1e-10);

    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    for n in [1, 4, 9] {
        let y = DVector::from_fn(n, |i, _| i as f64);
        let one = DVector::from_element(n, 1.0);
        assert_relative_eq!(nll(&y, &y, &one).unwrap(), 0.918_938_533_204_672_7, max_relative = 1e-10);
        assert_relative_eq!(nll(&y, &y, &one).unwrap(), half_ln_2pi, max_relative = 1e-12);
    }
    assert_relative_eq!(nll(&dvector![2.0], &dvector![0.0], &dvector![1.0]).unwrap(), 2.918_938_533_204_672_7, max_relative = 1e-10);

    let y = dvector![0.0, 1.0, 2.0];
    assert_eq!(r2(&y, &y).unwrap(), 1.0);
    assert_eq!(r2(&y, &DVector::from_element(3, 1.0)).unwrap(), 0.0);
    assert_relative_eq!(r2(&y, &dvector![0.0, 1.0, 1.0]).unwrap(), 0.5, max_relative = 1e-10);
}

#[test]
fn degenerate_targets_are_errors() {
    let y = dvector![3.0, 3.0];
    assert!(matches!(nrmse(&y, &y), Err(Error::DegenerateRange)));
    assert!(nrmse(&y, &y).unwrap_err().to_string().contains("degenerate range"));
    assert!(r2(&y, &y).is_err());
    assert!(nrmse(&dvector![1.0, 2.0], &dvector![1.0]).is_err());
}

#[test]
fn nrmse_is_scale_invariant() {
    let y = dvector![0.3, -1.0, 2.5, 0.7];
    let p = dvector![0.1, -0.8, 2.0, 1.1];
    let base = nrmse(&y, &p).unwrap();
    for c in [1e-3, 2.0, 7e4] {
        assert_relative_eq!(nrmse(&(&y * c), &(&p * c)).unwrap(), base, max_relative = 1e-12);
    }
}

#[test]
fn nll_grows_as_overconfident_variance_shrinks() {
    let y = dvector![1.0];
    let p = dvector![0.0];
    let mut prev = f64::NEG_INFINITY;
    for v in [1e-1, 1e-3, 1e-6, 1e-9, 1e-12] {
        let value = nll(&y, &p, &dvector![v]).unwrap();
        assert!(value > prev);
        prev = value;
    }
    assert!(prev > 1e11);
    // Floored below 1e-12.
    assert_eq!(nll(&y, &p, &dvector![0.0]).unwrap(), prev);
}

#[test]
fn spreadsheet_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let n = rng.random_range(3..40);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p: Vec<f64> = y.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();

        let mut sse = 0.0;
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        let mut sum = 0.0;
        let mut nll_sum = 0.0;
        for i in 0..n {
            sse += (y[i] - p[i]) * (y[i] - p[i]);
            lo = lo.min(y[i]);
            hi = hi.max(y[i]);
            sum += y[i];
            nll_sum += (2.0 * std::f64::consts::PI * s[i]).ln() + (y[i] - p[i]) * (y[i] - p[i]) / s[i];
        }
        let ybar = sum / n as f64;
        let mut sst = 0.0;
        for v in &y {
            sst += (v - ybar) * (v - ybar);
        }

        let (yv, pv, sv) = (DVector::from_vec(y), DVector::from_vec(p), DVector::from_vec(s));
        assert_relative_eq!(nrmse(&yv, &pv).unwrap(), (sse / n as f64).sqrt() / (hi - lo), max_relative = 1e-10);
        assert_relative_eq!(nll(&yv, &pv, &sv).unwrap(), nll_sum / (2.0 * n as f64), max_relative = 1e-10);
        assert_relative_eq!(r2(&yv, &pv).unwrap(), 1.0 - sse / sst, max_relative = 1e-10);
    }
}

#[test]
fn record_invariants() {
    let ok = rec("p", 5.0, 0, 0, "a", 0.1);
    assert!(ok.validate().is_ok());
    for r in [
        MetricRecord { nrmse: -0.1, ..ok.clone() },
        MetricRecord { r2: 1.5, ..ok.clone() },
        MetricRecord { runtime_seconds: 0.0, ..ok.clone() },
    ] {
        assert!(r.validate().is_err());
    }
}

/// `a` beats `b` on `wins` of `total` problems.
fn head_to_head(wins: usize, total: usize) -> Vec<MetricRecord> {
    (0..total)
        .flat_map(|i| {
            let p = format!("p{i}");
            let (la, lb) = if i < wins { (0.1, 0.2) } else { (0.2, 0.1) };
            [rec(&p, 5.0, 0, 0, "a", la), rec(&p, 5.0, 0, 0, "b", lb)]
        })
        .collect()
}

fn elo(records: &[MetricRecord], anchor: &str) -> EloResult {
    let config = EloConfig {
        anchor: anchor.into(),
        ..EloConfig::default()
    };
    elo_ratings(records, Metric::Nrmse, &config).unwrap()
}

#[test]
fn ten_to_one_record_is_four_hundred_points() {
    let result = elo(&head_to_head(10, 11), "b");
    assert_eq!(result.rating("b").unwrap(), 1000.0);
    let gap = result.rating("a").unwrap() - 1000.0;
    assert!((gap - 400.0).abs() < 20.0, "{gap}");
}

#[test]
fn split_record_gives_equal_ratings() {
    for anchor in ["a", "b"] {
        let result = elo(&head_to_head(5, 10), anchor);
        assert_eq!(result.rating("a").unwrap(), 1000.0);
        assert_eq!(result.rating("b").unwrap(), 1000.0);
    }
}

#[test]
fn cyclic_records_give_equal_ratings() {
    let mut records = Vec::new();
    for (i, (x, y, z)) in [(0.1, 0.2, 0.3), (0.2, 0.3, 0.1), (0.3, 0.1, 0.2)].into_iter().enumerate() {
        let p = format!("p{i}");
        records.push(rec(&p, 5.0, 0, 0, "x", x));
        records.push(rec(&p, 5.0, 0, 0, "y", y));
        records.push(rec(&p, 5.0, 0, 0, "z", z));
    }
    let result = elo(&records, "x");
    for r in &result.ratings {
        assert_relative_eq!(r.rating, 1000.0, epsilon = 1e-9);
    }
}

#[test]
fn bradley_terry_matches_two_player_closed_form() {
    let wins = DMatrix::from_row_slice(2, 2, &[0.0, 7.0, 2.0, 0.0]);
    let theta = bradley_terry(&wins);
    let expected = ((7.0 + ELO_PRIOR_TIES / 2.0) / (2.0 + ELO_PRIOR_TIES / 2.0)).ln();
    assert_relative_eq!(theta[0] - theta[1], expected, max_relative = 1e-10);
}

fn synthetic(seed: u64, strengths: &[(&str, f64)], problems: usize) -> Vec<MetricRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in 0..problems {
        for trial in 0..3 {
            for (name, s) in strengths {
                let loss = (s + rng.random_range(-1.0..1.0) as f64).exp();
                out.push(rec(&format!("p{p}"), 10.0, 0, trial, name, loss));
            }
        }
    }
    out
}

#[test]
fn permuting_labels_permutes_ratings() {
    let records = synthetic(1, &[("a", 0.0), ("b", 0.3), ("c", -0.2)], 6);
    let swap = |n: &str| match n {
        "a" => "c".to_string(),
        "c" => "a".to_string(),
        other => other.to_string(),
    };
    let relabelled: Vec<MetricRecord> = records
        .iter()
        .map(|r| MetricRecord {
            algorithm: swap(&r.algorithm),
            ..r.clone()
        })
        .collect();
    let base = elo(&records, "b");
    let perm = elo(&relabelled, "b");
    for r in &base.ratings {
        assert_relative_eq!(perm.rating(&swap(&r.algorithm)).unwrap(), r.rating, max_relative = 1e-12);
    }
}

#[test]
fn bootstrap_intervals_contain_the_estimate() {
    let mut inside = 0;
    let mut total = 0;
    for seed in 0..30 {
        let records = synthetic(seed, &[("a", 0.0), ("b", 0.2), ("c", 0.5)], 8);
        let config = EloConfig {
            anchor: "a".into(),
            seed,
            ..EloConfig::default()
        };
        let result = elo_ratings(&records, Metric::Nll, &config).unwrap();
        for r in &result.ratings {
            total += 1;
            inside += usize::from(r.ci_low <= r.rating && r.rating <= r.ci_high);
        }
    }
    assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
}

#[test]
fn elo_excludes_uncompared_and_checks_anchor() {
    let mut records = head_to_head(3, 4);
    records.push(rec("lonely", 5.0, 0, 0, "c", 0.5));
    let result = elo(&records, "a");
    assert_eq!(result.excluded, vec!["c".to_string()]);
    assert!(result.rating("c").is_none());
    let config = EloConfig {
        anchor: "c".into(),
        ..EloConfig::default()
    };
    assert!(elo_ratings(&records, Metric::Nrmse, &config).is_err());
}

#[test]
fn r2_is_oriented_higher_better() {
    let records = head_to_head(10, 11);
    let by_r2 = elo_ratings(&records, Metric::R2, &EloConfig { anchor: "b".into(), ..EloConfig::default() }).unwrap();
    assert!(by_r2.rating("a").unwrap() > 1300.0);
}

#[test]
fn cell_mean_unit_compares_once_per_cell() {
    // a wins 2 of 3 trials narrowly, loses one badly: b wins on the mean.
    let mut records = Vec::new();
    for (t, (la, lb)) in [(0.1, 0.2), (0.1, 0.2), (5.0, 0.2)].into_iter().enumerate() {
        records.push(rec("p", 5.0, 0, t, "a", la));
        records.push(rec("p", 5.0, 0, t, "b", lb));
    }
    let trial = win_rate_matrix(&records, Metric::Nrmse, ComparisonUnit::Trial).unwrap();
    assert_relative_eq!(trial.get("a", "b").unwrap(), 2.0 / 3.0);
    let cell = win_rate_matrix(&records, Metric::Nrmse, ComparisonUnit::CellMean).unwrap();
    assert_eq!(cell.get("a", "b").unwrap(), 0.0);
}

#[test]
fn rank_examples() {
    assert_eq!(average_ranks(&[0.1, 0.2, 0.3]), vec![1.0, 2.0, 3.0]);
    assert_eq!(average_ranks(&[0.4, 0.4]), vec![1.5, 1.5]);
    assert_eq!(average_ranks(&[2.0, 1.0, 2.0, 0.5]), vec![3.5, 2.0, 3.5, 1.0]);

    let records = vec![
        rec("p", 5.0, 0, 0, "a", 0.1),
        rec("p", 5.0, 0, 0, "b", 0.2),
        rec("p", 5.0, 0, 0, "c", 0.3),
        rec("q", 5.0, 0, 0, "a", 0.3),
        rec("q", 5.0, 0, 0, "b", 0.2),
        rec("q", 5.0, 0, 0, "c", 0.1),
        // Incomplete cell is skipped.
        rec("r", 5.0, 0, 0, "a", 9.0),
    ];
    let ranks = average_rank(&records, Metric::Nrmse).unwrap();
    assert_eq!(ranks["a"], 2.0);
    assert_eq!(ranks["b"], 2.0);
    assert_eq!(ranks["c"], 2.0);
}

#[test]
fn score_examples() {
    assert_eq!(cell_scores(&[1.0, 2.0, 3.0]), vec![1.0, 0.0, -1.0]);
    assert_eq!(cell_scores(&[1.0, 2.0, 100.0]), vec![1.0, 0.0, -1.0]);
    assert_eq!(cell_scores(&[4.0, 4.0, 4.0]), vec![0.0; 3]);
    let base = cell_scores(&[0.3, 0.1, 0.7, 0.2]);
    let affine: Vec<f64> = [0.3, 0.1, 0.7, 0.2].iter().map(|v| 3.0 * v + 11.0).collect();
    for (a, b) in base.iter().zip(cell_scores(&affine)) {
        assert_relative_eq!(*a, b, epsilon = 1e-12);
    }
}

#[test]
fn win_rate_properties() {
    let records = synthetic(3, &[("a", 0.0), ("b", 0.4), ("c", -0.4)], 5);
    let m = win_rate_matrix(&records, Metric::Nrmse, ComparisonUnit::Trial).unwrap();
    for a in &m.algorithms {
        assert_eq!(m.get(a, a), Some(0.5));
        for b in &m.algorithms {
            if a != b {
                assert_relative_eq!(m.get(a, b).unwrap() + m.get(b, a).unwrap(), 1.0);
            }
        }
    }
    let always = head_to_head(4, 4);
    let m = win_rate_matrix(&always, Metric::Nrmse, ComparisonUnit::Trial).unwrap();
    assert_eq!((m.get("a", "b"), m.get("b", "a")), (Some(1.0), Some(0.0)));

    let twins: Vec<MetricRecord> = (0..4)
        .flat_map(|i| [rec(&format!("p{i}"), 5.0, 0, 0, "a", 0.3), rec(&format!("p{i}"), 5.0, 0, 0, "b", 0.3)])
        .collect();
    let m = win_rate_matrix(&twins, Metric::Nrmse, ComparisonUnit::Trial).unwrap();
    assert_eq!(m.get("a", "b"), Some(0.5));
}

#[test]
fn rank_and_win_rate_ignore_monotone_transforms() {
    let records = synthetic(4, &[("a", 0.0), ("b", 0.1), ("c", -0.3), ("d", 0.2)], 6);
    let transformed: Vec<MetricRecord> = records
        .iter()
        .map(|r| MetricRecord {
            nrmse: r.nrmse.ln() * 5.0 + r.nrmse.powi(3),
            ..r.clone()
        })
        .collect();
    assert_eq!(average_rank(&records, Metric::Nrmse).unwrap(), average_rank(&transformed, Metric::Nrmse).unwrap());
    assert_eq!(
        win_rate_matrix(&records, Metric::Nrmse, ComparisonUnit::Trial).unwrap(),
        win_rate_matrix(&transformed, Metric::Nrmse, ComparisonUnit::Trial).unwrap()
    );
}

#[test]
fn raw_summary_matches_hand_computation() {
    let values = [0.2, 0.4, 0.9, 0.1, 0.3];
    let mut records: Vec<MetricRecord> = values.iter().enumerate().map(|(i, &v)| rec("p", 5.0, i, 0, "a", v)).collect();
    records.extend(values.iter().enumerate().map(|(i, &v)| rec("p", 10.0, i, 0, "a", 2.0 * v)));
    let rows = raw_summary(&records, Metric::Nrmse);
    assert_eq!(rows.len(), 2);
    // mean 0.38; squared deviations sum to 0.388.
    assert_eq!((rows[0].ratio, rows[0].count), (5.0, 5));
    assert_relative_eq!(rows[0].mean, 0.38, max_relative = 1e-12);
    assert_relative_eq!(rows[0].std, (0.388f64 / 4.0).sqrt(), max_relative = 1e-12);
    assert_relative_eq!(rows[1].mean, 0.76, max_relative = 1e-12);
}

#[test]
fn metric_names_parse() {
    for m in Metric::ALL {
        assert_eq!(Metric::parse(m.name()).unwrap(), m);
    }
    assert!(Metric::parse("mae").unwrap_err().to_string().contains("nrmse"));
}
