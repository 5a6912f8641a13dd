//! Per-trial accuracy metrics and their aggregation across benchmark cells.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NLL_VARIANCE_FLOOR: f64 = 1e-12;

fn check_lengths(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidInput("metrics need at least one point".into()));
    }
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    Ok(())
}

/// Root mean squared error divided by the range of `y`.
pub fn nrmse(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let range = y.max() - y.min();
    if !(range > 0.0) {
        return Err(Error::DegenerateRange);
    }
    let mse = (y - y_hat).norm_squared() / y.len() as f64;
    Ok(mse.sqrt() / range)
}

/// Mean Gaussian negative log density with variances floored at
/// [`NLL_VARIANCE_FLOOR`].
pub fn nll(y: &DVector<f64>, y_hat: &DVector<f64>, variance: &DVector<f64>) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if variance.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: variance.len(),
        });
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let total: f64 = (0..y.len())
        .map(|i| {
            let v = variance[i].max(NLL_VARIANCE_FLOOR);
            ln_2pi + v.ln() + (y[i] - y_hat[i]).powi(2) / v
        })
        .sum();
    Ok(total / (2.0 * y.len() as f64))
}

pub fn r2(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let mean = y.mean();
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateRange);
    }
    Ok(1.0 - (y - y_hat).norm_squared() / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub problem: String,
    pub ratio: f64,
    pub fold: usize,
    pub trial: usize,
    pub algorithm: String,
    pub nrmse: f64,
    pub nll: f64,
    pub r2: f64,
    pub runtime_seconds: f64,
}

impl MetricRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidData(format!("{} on {}: {what}", self.algorithm, self.problem)));
        if !(self.nrmse >= 0.0) {
            return bad("nrmse must be non-negative");
        }
        if !(self.r2 <= 1.0) {
            return bad("r2 must not exceed 1");
        }
        if !(self.runtime_seconds > 0.0) {
            return bad("runtime must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nrmse,
    Nll,
    R2,
}

impl Metric {
    pub const ALL: [Self; 3] = [Self::Nrmse, Self::Nll, Self::R2];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Nrmse => "nrmse",
            Self::Nll => "nll",
            Self::R2 => "r2",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name).ok_or_else(|| {
            let valid: Vec<&str> = Self::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidInput(format!("unknown metric '{name}'; valid: {}", valid.join(", ")))
        })
    }

    pub fn value(&self, r: &MetricRecord) -> f64 {
        match self {
            Self::Nrmse => r.nrmse,
            Self::Nll => r.nll,
            Self::R2 => r.r2,
        }
    }

    /// The metric oriented so that lower is better.
    pub fn loss(&self, r: &MetricRecord) -> f64 {
        match self {
            Self::R2 => -r.r2,
            _ => self.value(r),
        }
    }
}

/// Granularity of head-to-head comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonUnit {
    /// One comparison per `(problem, ratio, fold, trial)`.
    #[default]
    Trial,
    /// One comparison per `(problem, ratio)` on the mean over folds and trials.
    CellMean,
}

/// Losses of every algorithm evaluated on one comparison unit.
#[derive(Debug, Clone)]
struct Unit {
    problem: String,
    losses: BTreeMap<String, f64>,
}

type UnitKey = (String, u64, usize, usize);

fn cell_key(r: &MetricRecord) -> (String, u64) {
    (r.problem.clone(), r.ratio.to_bits())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn units(records: &[MetricRecord], metric: Metric, unit: ComparisonUnit) -> Vec<Unit> {
    let mut grouped: BTreeMap<UnitKey, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let loss = metric.loss(r);
        if !loss.is_finite() {
            continue;
        }
        let key = match unit {
            ComparisonUnit::Trial => (r.problem.clone(), r.ratio.to_bits(), r.fold, r.trial),
            ComparisonUnit::CellMean => (r.problem.clone(), r.ratio.to_bits(), 0, 0),
        };
        grouped.entry(key).or_default().entry(r.algorithm.clone()).or_default().push(loss);
    }
    grouped
        .into_iter()
        .map(|((problem, ..), algs)| Unit {
            problem,
            losses: algs.into_iter().map(|(a, v)| (a, mean(&v))).collect(),
        })
        .collect()
}

fn algorithms(records: &[MetricRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.algorithm.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Half a win per side for every pair, which keeps the strengths finite
/// under perfect separation.
pub const ELO_PRIOR_TIES: f64 = 0.01;

/// `wins[(i, j)]` counts wins of `i` over `j` with ties split in half.
fn pairwise_wins(units: &[&Unit], names: &[String]) -> DMatrix<f64> {
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let k = names.len();
    let mut wins = DMatrix::zeros(k, k);
    for u in units {
        let present: Vec<(usize, f64)> = u
            .losses
            .iter()
            .filter_map(|(a, &l)| index.get(a.as_str()).map(|&i| (i, l)))
            .collect();
        for (p, &(i, li)) in present.iter().enumerate() {
            for &(j, lj) in &present[p + 1..] {
                if li < lj {
                    wins[(i, j)] += 1.0;
                } else if lj < li {
                    wins[(j, i)] += 1.0;
                } else {
                    wins[(i, j)] += 0.5;
                    wins[(j, i)] += 0.5;
                }
            }
        }
    }
    wins
}

/// Natural-log Bradley–Terry strengths by minorisation–maximisation.
pub fn bradley_terry(wins: &DMatrix<f64>) -> DVector<f64> {
    let k = wins.nrows();
    let mut w = wins.clone();
    for i in 0..k {
        for j in 0..k {
            if i != j {
                w[(i, j)] += ELO_PRIOR_TIES / 2.0;
            }
        }
    }
    let total_wins: Vec<f64> = (0..k).map(|i| w.row(i).sum()).collect();
    let mut p = DVector::from_element(k, 1.0);
    for _ in 0..100_000 {
        let mut next = DVector::zeros(k);
        for i in 0..k {
            let denom: f64 = (0..k)
                .filter(|&j| j != i)
                .map(|j| (w[(i, j)] + w[(j, i)]) / (p[i] + p[j]))
                .sum();
            next[i] = total_wins[i] / denom;
        }
        let log_mean = next.iter().map(|v: &f64| v.ln()).sum::<f64>() / k as f64;
        next.iter_mut().for_each(|v| *v /= log_mean.exp());
        let change = (0..k).map(|i| (next[i] / p[i]).ln().abs()).fold(0.0, f64::max);
        p = next;
        if change < 1e-13 {
            break;
        }
    }
    p.map(|v| v.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloConfig {
    pub anchor: String,
    pub anchor_value: f64,
    pub bootstrap_rounds: usize,
    pub unit: ComparisonUnit,
    pub seed: u64,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self {
            anchor: "resgp".into(),
            anchor_value: 1000.0,
            bootstrap_rounds: 100,
            unit: ComparisonUnit::Trial,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EloRating {
    pub algorithm: String,
    pub rating: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EloResult {
    pub anchor: String,
    pub anchor_value: f64,
    pub ratings: Vec<EloRating>,
    /// Algorithms without a single comparison.
    pub excluded: Vec<String>,
}

impl EloResult {
    pub fn rating(&self, algorithm: &str) -> Option<f64> {
        self.ratings.iter().find(|r| r.algorithm == algorithm).map(|r| r.rating)
    }
}

fn to_elo(theta: &DVector<f64>, anchor: usize, value: f64) -> Vec<f64> {
    let scale = 400.0 / std::f64::consts::LN_10;
    theta.iter().map(|t| value + scale * (t - theta[anchor])).collect()
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bradley–Terry Elo ratings with percentile bootstrap intervals obtained by
/// resampling problems.
pub fn elo_ratings(records: &[MetricRecord], metric: Metric, config: &EloConfig) -> Result<EloResult> {
    let units = units(records, metric, config.unit);
    let compared: BTreeSet<String> = units
        .iter()
        .filter(|u| u.losses.len() >= 2)
        .flat_map(|u| u.losses.keys().cloned())
        .collect();
    let excluded: Vec<String> = algorithms(records).into_iter().filter(|a| !compared.contains(a)).collect();
    for a in &excluded {
        warn!("{a} has no comparisons and is excluded from the Elo table");
    }
    let names: Vec<String> = compared.into_iter().collect();
    if names.len() < 2 {
        return Err(Error::InvalidInput("Elo needs at least two compared algorithms".into()));
    }
    let anchor = names.iter().position(|n| *n == config.anchor).ok_or_else(|| {
        Error::InvalidInput(format!("anchor '{}' is not among the compared algorithms: {}", config.anchor, names.join(", ")))
    })?;

    let all: Vec<&Unit> = units.iter().collect();
    let point = to_elo(&bradley_terry(&pairwise_wins(&all, &names)), anchor, config.anchor_value);

    let mut by_problem: BTreeMap<&str, Vec<&Unit>> = BTreeMap::new();
    for u in &units {
        by_problem.entry(u.problem.as_str()).or_default().push(u);
    }
    let problems: Vec<&Vec<&Unit>> = by_problem.values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(config.bootstrap_rounds); names.len()];
    for _ in 0..config.bootstrap_rounds {
        let sample: Vec<&Unit> = (0..problems.len())
            .flat_map(|_| problems[rng.random_range(0..problems.len())].iter().copied())
            .collect();
        let ratings = to_elo(&bradley_terry(&pairwise_wins(&sample, &names)), anchor, config.anchor_value);
        for (d, r) in draws.iter_mut().zip(ratings) {
            d.push(r);
        }
    }

    let ratings = names
        .iter()
        .zip(point)
        .zip(draws)
        .map(|((name, rating), mut d)| {
            let (ci_low, ci_high) = if d.is_empty() {
                (rating, rating)
            } else {
                d.sort_by(f64::total_cmp);
                (percentile(&d, 0.025), percentile(&d, 0.975))
            };
            EloRating {
                algorithm: name.clone(),
                rating,
                ci_low,
                ci_high,
            }
        })
        .collect();
    Ok(EloResult {
        anchor: config.anchor.clone(),
        anchor_value: config.anchor_value,
        ratings,
        excluded,
    })
}

/// Per-`(problem, ratio)` mean losses, keeping only cells where every
/// algorithm is present.
fn complete_cells(records: &[MetricRecord], metric: Metric) -> (Vec<String>, Vec<Vec<f64>>) {
    let names = algorithms(records);
    let mut cells: Vec<Vec<f64>> = Vec::new();
    for u in units(records, metric, ComparisonUnit::CellMean) {
        if u.losses.len() == names.len() {
            cells.push(names.iter().map(|n| u.losses[n]).collect());
        } else {
            warn!("skipping a cell of {} that lacks some algorithms", u.problem);
        }
    }
    (names, cells)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn average_over_cells(names: Vec<String>, cells: &[Vec<f64>], f: impl Fn(&[f64]) -> Vec<f64>) -> BTreeMap<String, f64> {
    let mut totals = vec![0.0; names.len()];
    for c in cells {
        for (t, v) in totals.iter_mut().zip(f(c)) {
            *t += v;
        }
    }
    let n = cells.len() as f64;
    names.into_iter().zip(totals).map(|(a, t)| (a, t / n)).collect()
}

/// Mean rank (1 = best) over `(problem, ratio)` cells.
pub fn average_rank(records: &[MetricRecord], metric: Metric) -> Result<BTreeMap<String, f64>> {
    let (names, cells) = complete_cells(records, metric);
    if cells.is_empty() {
        return Err(Error::InvalidInput("no cell contains every algorithm".into()));
    }
    Ok(average_over_cells(names, &cells, average_ranks))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Scores of one cell of losses: best 1, median 0, floored at -1.
pub fn cell_scores(losses: &[f64]) -> Vec<f64> {
    let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let med = median(losses);
    if best == med {
        return vec![0.0; losses.len()];
    }
    losses.iter().map(|v| ((med - v) / (med - best)).max(-1.0)).collect()
}

/// Mean normalised score over `(problem, ratio)` cells.
pub fn normalized_score(records: &[MetricRecord], metric: Metric) -> Result<BTreeMap<String, f64>> {
    let (names, cells) = complete_cells(records, metric);
    if names.len() < 2 || cells.is_empty() {
        return Err(Error::InvalidInput("normalised scores need two algorithms on a complete cell".into()));
    }
    Ok(average_over_cells(names, &cells, cell_scores))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinRateMatrix {
    pub algorithms: Vec<String>,
    /// `rates[i][j]`: fraction of shared units where `i` beats `j`; `None`
    /// when the pair never meets.
    pub rates: Vec<Vec<Option<f64>>>,
}

impl WinRateMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.algorithms.iter().position(|n| n == a)?;
        let j = self.algorithms.iter().position(|n| n == b)?;
        self.rates[i][j]
    }
}

pub fn win_rate_matrix(records: &[MetricRecord], metric: Metric, unit: ComparisonUnit) -> Result<WinRateMatrix> {
    let names = algorithms(records);
    if names.len() < 2 {
        return Err(Error::InvalidInput("win rates need at least two algorithms".into()));
    }
    let units = units(records, metric, unit);
    let refs: Vec<&Unit> = units.iter().collect();
    let wins = pairwise_wins(&refs, &names);
    let k = names.len();
    let rates = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let n = wins[(i, j)] + wins[(j, i)];
                    if i == j {
                        Some(0.5)
                    } else if n > 0.0 {
                        Some(wins[(i, j)] / n)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    Ok(WinRateMatrix { algorithms: names, rates })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawSummary {
    pub problem: String,
    pub ratio: f64,
    pub algorithm: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single record.
    pub std: f64,
}

/// Mean and standard deviation of the metric per `(problem, ratio,
/// algorithm)`.
pub fn raw_summary(records: &[MetricRecord], metric: Metric) -> Vec<RawSummary> {
    let mut grouped: BTreeMap<((String, u64), String), (f64, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let entry = grouped.entry((cell_key(r), r.algorithm.clone())).or_insert((r.ratio, Vec::new()));
        entry.1.push(metric.value(r));
    }
    grouped
        .into_iter()
        .map(|(((problem, _), algorithm), (ratio, v))| {
            let m = mean(&v);
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            RawSummary {
                problem,
                ratio,
                algorithm,
                count: v.len(),
                mean: m,
                std,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
