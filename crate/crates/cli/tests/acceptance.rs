//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fire_core::benchmarks::theory::{run_theory_check, TheoryCheck};
use fire_core::benchmarks::{concrete_lf, eval_hd, make_splits, problem, Design, SplitPlan};
use fire_core::gp::{ExactGp, GpHyperparams};
use fire_core::metrics::{average_rank, elo_ratings, nll, nrmse, r2, EloConfig, Metric, MetricRecord};
use fire_core::{fire_fit, AugmentationMode, FireSpec, GpFactory, KernelFamily, KernelSpec, QuantileLevels};
use fire_mf::config::{AlgorithmConfig, AlgorithmKind, Backend, RunConfig};
use fire_mf::external::{SidecarClient, SidecarCommand};
use fire_mf::runner::{read_results, results_path, run_experiment, ResultLine};
use fire_mf::WireError;
use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, outcome: Outcome) -> Outcome {
    let elapsed = start.elapsed();
    let outcome = outcome.map(|d| format!("{d}; {:.1} s", elapsed.as_secs_f64()));
    match outcome {
        Ok(d) if elapsed > limit => Err(format!("{d} exceeds {} s", limit.as_secs())),
        other => other,
    }
}

fn sq_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (x, y))| ((x - y) / ls[if ls.len() == 1 { 0 } else { k }]).powi(2))
        .sum()
}

/// Kernel written out independently of the library.
fn kernel(family: KernelFamily, h: &GpHyperparams, a: &[f64], b: &[f64]) -> f64 {
    let r2 = sq_dist(a, b, &h.lengthscales);
    match family {
        KernelFamily::SquaredExponential => h.signal_variance * (-0.5 * r2).exp(),
        KernelFamily::Matern52 => {
            let r = (5.0 * r2).sqrt();
            h.signal_variance * (1.0 + r + r * r / 3.0) * (-r).exp()
        }
    }
}

fn gp_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = 1 + case % 6;
        let d = 1 + case % 3;
        let family = if case % 2 == 0 { KernelFamily::Matern52 } else { KernelFamily::SquaredExponential };
        let spec = KernelSpec { family, ard: true };
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let h = GpHyperparams {
            signal_variance: rng.random_range(0.3..3.0),
            lengthscales: (0..d).map(|_| rng.random_range(0.3..2.0)).collect(),
            noise_variance: rng.random_range(1e-3..0.3),
        };
        let gp = ExactGp::condition(&x, &y, spec, h.clone()).map_err(|e| e.to_string())?;
        let xq = DMatrix::from_fn(4, d, |_, _| rng.random_range(-2.0..2.0));
        let (m, v) = gp.predict_latent(&xq).map_err(|e| e.to_string())?;

        let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut k = DMatrix::from_fn(n, n, |i, j| kernel(family, &h, &rows[i], &rows[j]));
        for i in 0..n {
            k[(i, i)] += gp.effective_noise();
        }
        let kinv = k.try_inverse().ok_or("singular oracle matrix")?;
        for q in 0..xq.nrows() {
            let p: Vec<f64> = xq.row(q).iter().copied().collect();
            let ks = DVector::from_fn(n, |i, _| kernel(family, &h, &rows[i], &p));
            let om = ks.dot(&(&kinv * &y));
            let ov = kernel(family, &h, &p, &p) - ks.dot(&(&kinv * &ks));
            worst = worst.max((m[q] - om).abs()).max((v[q] - ov).abs());
        }
    }
    within(Duration::from_secs(5), start, check(worst < 1e-8, format!("max abs deviation {worst:.2e}")))
}

fn mean_of(records: &[&MetricRecord], f: impl Fn(&MetricRecord) -> f64) -> f64 {
    records.iter().map(|r| f(r)).sum::<f64>() / records.len() as f64
}

fn run_records(config: &RunConfig) -> Result<Vec<ResultLine>, String> {
    run_experiment(config, false).map_err(|e| format!("{e:#}"))?;
    let (lines, _) = read_results(&results_path(&config.output)).map_err(|e| e.to_string())?;
    if let Some(bad) = lines.iter().find(|l| l.failed()) {
        return Err(format!("{} failed: {:?}", bad.algorithm, bad.error));
    }
    Ok(lines)
}

fn heteroscedastic_ordering(out: &Path) -> Outcome {
    let start = Instant::now();
    let config = RunConfig::from_toml(&format!(
        "problems = [\"goldberg\", \"yuan\", \"williams\"]\nratios = [10]\nfolds = 1\ntrials = 20\nseed = 1\n\
         lf_sizes = [100]\nn_hf = 30\noutput = \"{}\"\n\
         [[algorithms]]\nname = \"full\"\nkind = \"fire\"\nmode = \"full\"\n\
         [[algorithms]]\nname = \"mean_only\"\nkind = \"fire\"\nmode = \"mean_only\"\n",
        out.display()
    ))
    .map_err(|e| e.to_string())?;
    let records: Vec<MetricRecord> = run_records(&config)?.iter().filter_map(ResultLine::record).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for p in ["goldberg", "yuan", "williams"] {
        let pick = |alg: &str| -> Vec<&MetricRecord> {
            records.iter().filter(|r| r.problem == p && r.algorithm == alg).collect()
        };
        let (full, mean_only) = (pick("full"), pick("mean_only"));
        let (nll_f, nll_m) = (mean_of(&full, |r| r.nll), mean_of(&mean_only, |r| r.nll));
        let (rmse_f, rmse_m) = (mean_of(&full, |r| r.nrmse), mean_of(&mean_only, |r| r.nrmse));
        ok &= full.len() == 20 && nll_f <= nll_m && rmse_f <= 1.05 * rmse_m;
        parts.push(format!("{p}: NLL {nll_f:.3} vs {nll_m:.3}, NRMSE {rmse_f:.4} vs {rmse_m:.4}"));
    }
    within(Duration::from_secs(600), start, check(ok, parts.join("; ")))
}

fn theory(name: TheoryCheck) -> Outcome {
    let start = Instant::now();
    let report = run_theory_check(name, 100_000, 0).map_err(|e| e.to_string())?;
    let parts: Vec<String> = report
        .comparisons
        .iter()
        .map(|c| {
            format!(
                "{}: {:.4} vs {:.4} (se {:.4}, {:?} {})",
                c.generator,
                c.richer.mse,
                c.poorer.mse,
                c.stderr,
                c.expectation,
                if c.passed { "ok" } else { "violated" }
            )
        })
        .collect();
    within(Duration::from_secs(120), start, check(report.passed, parts.join("; ")))
}

fn additive_uncertainty() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (i, name) in ["currin", "forrester", "park91b", "goldberg"].into_iter().enumerate() {
        let p = problem(name).map_err(|e| e.to_string())?;
        let split = make_splits(&p, &SplitPlan::new(10.0, Design::Disjoint, 0, i as u64)).map_err(|e| e.to_string())?;
        let spec = FireSpec::uniform(std::sync::Arc::new(GpFactory::default()), AugmentationMode::Full);
        let model = fire_fit(&split.train, &spec, i as u64).map_err(|e| e.to_string())?;
        let xq = DMatrix::from_fn(250, p.dim, |_, j| rng.random_range(p.bounds[j].0..p.bounds[j].1));
        let pred = model.predict(&xq).map_err(|e| e.to_string())?;
        for k in 0..xq.nrows() {
            let sum = pred.base.variance()[k] + pred.residual.variance()[k];
            worst = worst.max((pred.variance[k] - sum).abs() / sum);
            count += 1;
        }
    }
    check(count == 1000 && worst <= 1e-15, format!("{count} predictions, max relative deviation {worst:.1e}"))
}

fn baseline_sanity(out: &Path) -> Outcome {
    let start = Instant::now();
    let config = RunConfig::from_toml(&format!(
        "problems = [\"forrester\"]\nfolds = 5\ntrials = 3\nseed = 2\noutput = \"{}\"\n\
         [[algorithms]]\nname = \"fire\"\nkind = \"fire\"\n\
         [[algorithms]]\nname = \"ar1\"\nkind = \"ar1\"\n\
         [[algorithms]]\nname = \"resgp\"\nkind = \"resgp\"\n\
         [[algorithms]]\nname = \"nargp\"\nkind = \"nargp\"\n",
        out.display()
    ))
    .map_err(|e| e.to_string())?;
    let records: Vec<MetricRecord> = run_records(&config)?.iter().filter_map(ResultLine::record).collect();
    let mut ok = records.len() == 6 * 15 * 4;
    let mut parts = Vec::new();
    for alg in ["fire", "ar1", "resgp", "nargp"] {
        let at25: Vec<&MetricRecord> = records.iter().filter(|r| r.algorithm == alg && r.ratio == 25.0).collect();
        let mean = mean_of(&at25, |r| r.nrmse);
        let worst = at25.iter().map(|r| r.nrmse).fold(0.0, f64::max);
        ok &= at25.len() == 15 && mean < 0.5;
        parts.push(format!("{alg} NRMSE@25% mean {mean:.4} max {worst:.4}"));
    }
    let ranks = average_rank(&records, Metric::Nrmse).map_err(|e| e.to_string())?;
    let best_baseline = ["ar1", "resgp", "nargp"].iter().map(|a| ranks[*a]).fold(f64::INFINITY, f64::min);
    ok &= ranks["fire"] <= best_baseline + 0.5;
    let rank_text: Vec<String> = ranks.iter().map(|(a, r)| format!("{a} {r:.2}")).collect();
    parts.push(format!("average ranks: {}", rank_text.join(", ")));
    within(Duration::from_secs(900), start, check(ok, parts.join("; ")))
}

fn record(problem: &str, algorithm: &str, loss: f64) -> MetricRecord {
    MetricRecord {
        problem: problem.into(),
        ratio: 10.0,
        fold: 0,
        trial: 0,
        algorithm: algorithm.into(),
        nrmse: loss,
        nll: loss,
        r2: 1.0 - loss,
        runtime_seconds: 1.0,
    }
}

fn metric_formulas() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-10;
    let y = dvector![0.0, 2.0];
    let mut ok = close(nrmse(&y, &y).unwrap(), 0.0) && close(nrmse(&y, &dvector![1.0, 1.0]).unwrap(), 0.5);
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    for n in [1, 3, 10] {
        let y = DVector::from_fn(n, |i, _| i as f64 * 0.7);
        ok &= close(nll(&y, &y, &DVector::from_element(n, 1.0)).unwrap(), half_ln_2pi);
    }
    ok &= close(nll(&dvector![2.0], &dvector![0.0], &dvector![1.0]).unwrap(), half_ln_2pi + 2.0);
    let y = dvector![0.0, 1.0, 2.0];
    ok &= close(r2(&y, &y).unwrap(), 1.0)
        && close(r2(&y, &DVector::from_element(3, 1.0)).unwrap(), 0.0)
        && close(r2(&y, &dvector![0.0, 1.0, 1.0]).unwrap(), 0.5);

    let mut records = Vec::new();
    for i in 0..11 {
        let p = format!("p{i}");
        let (a, b) = if i < 10 { (0.1, 0.2) } else { (0.2, 0.1) };
        records.push(record(&p, "a", a));
        records.push(record(&p, "b", b));
    }
    let config = EloConfig {
        anchor: "b".into(),
        ..EloConfig::default()
    };
    let elo = elo_ratings(&records, Metric::Nrmse, &config).map_err(|e| e.to_string())?;
    let anchor = elo.rating("b").unwrap();
    let gap = elo.rating("a").unwrap() - anchor;
    ok &= anchor == 1000.0 && (gap - 400.0).abs() <= 20.0;
    check(ok, format!("unit vectors match; 10/11 record gives a {gap:.1} point gap; anchor {anchor}"))
}

fn quick_fire(name: &str, args: &[&str], timeout: f64) -> AlgorithmConfig {
    let mut a = AlgorithmConfig::new(name, AlgorithmKind::Fire);
    a.backend = Backend::External;
    a.sidecar = Some(env!("CARGO_BIN_EXE_mock-sidecar").into());
    a.sidecar_args = args.iter().map(|s| s.to_string()).collect();
    a.timeout_seconds = timeout;
    a
}

fn protocol_conformance(out: &Path) -> Outcome {
    let mut config = RunConfig::from_toml(&format!(
        "problems = [\"currin\"]\nratios = [5]\nfolds = 2\ntrials = 1\nseed = 4\noutput = \"{}\"\n\
         [[algorithms]]\nname = \"resgp\"\nkind = \"resgp\"\n",
        out.display()
    ))
    .map_err(|e| e.to_string())?;
    config.algorithms.push(quick_fire("fire-wire", &["--mode", "gp"], 300.0));
    config.algorithms.push(quick_fire("fire-malformed", &["--mode", "gp", "--fault", "malformed"], 300.0));
    config.algorithms.push(quick_fire("fire-hang", &["--fault", "hang"], 1.0));
    run_experiment(&config, false).map_err(|e| format!("{e:#}"))?;
    let (lines, dropped) = read_results(&results_path(out)).map_err(|e| e.to_string())?;
    let by_alg = |alg: &str| -> Vec<&ResultLine> { lines.iter().filter(|l| l.algorithm == alg).collect() };
    let wire_ok = by_alg("fire-wire")
        .iter()
        .all(|l| l.record().is_some_and(|r| r.nrmse.is_finite() && r.nll.is_finite()));
    let errors = |alg: &str, needle: &str| by_alg(alg).iter().all(|l| l.error.as_deref().is_some_and(|e| e.contains(needle)));
    let malformed_ok = errors("fire-malformed", "malformed sidecar response");
    let hang_ok = errors("fire-hang", "did not answer predict");
    let file_ok = dropped == 0 && lines.len() == 8 && by_alg("resgp").iter().all(|l| l.record().is_some());

    let x = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64 / 6.0);
    let y = DVector::from_fn(5, |i, _| i as f64);
    let levels = QuantileLevels::default();
    let mock = SidecarCommand::new(env!("CARGO_BIN_EXE_mock-sidecar"));
    let mut c = SidecarClient::spawn(&mock.clone().args(["--fault", "malformed"])).map_err(|e| e.to_string())?;
    c.fit(&x, &y).map_err(|e| e.to_string())?;
    let typed_malformed = matches!(c.predict(&x, &levels), Err(WireError::Malformed { op: "predict", .. }));
    let mut c = SidecarClient::spawn(&mock.clone().args(["--fault", "hang"]).timeout(Duration::from_millis(500)))
        .map_err(|e| e.to_string())?;
    c.fit(&x, &y).map_err(|e| e.to_string())?;
    let typed_timeout = matches!(c.predict(&x, &levels), Err(WireError::Timeout { op: "predict", .. }));
    let mut c = SidecarClient::spawn(&mock).map_err(|e| e.to_string())?;
    let typed_order = matches!(c.predict(&x, &levels), Err(WireError::Protocol { op: "predict", .. }));

    check(
        wire_ok && malformed_ok && hang_ok && file_ok && typed_malformed && typed_timeout && typed_order,
        format!(
            "pipeline {wire_ok}, malformed {malformed_ok}/{typed_malformed}, timeout {hang_ok}/{typed_timeout}, \
             ordering {typed_order}, results intact {file_ok}"
        ),
    )
}

fn golden_values() -> Outcome {
    let ones = [1.0; 10];
    let hf = eval_hd(&ones, 10, 2).map_err(|e| e.to_string())?;
    let lf = eval_hd(&ones, 10, 1).map_err(|e| e.to_string())?;
    let unit = concrete_lf(&[1.0, 0.0, 0.0, 1.0, 0.0, 900.0, 700.0, 1.0]).map_err(|e| e.to_string())?;
    let base = [310.0, 95.0, 40.0, 180.0, 6.0, 950.0, 780.0, 28.0];
    let mut doubled = base;
    doubled[7] = 56.0;
    let ratio = concrete_lf(&doubled).unwrap() / concrete_lf(&base).unwrap();
    let expected = 2f64.powf(0.292);
    let ok = hf == 9.0 && lf == -39.2 && (unit - 2.56f64.exp()).abs() < 1e-9 && (ratio - expected).abs() < 1e-9;
    check(ok, format!("HD HF {hf}, LF {lf}; concrete unit {unit:.9}, age-doubling ratio {ratio:.9}"))
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let tmp = TempDir::new().expect("temporary directory");
    let dir = |name: &str| tmp.path().join(name);
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 gp-oracle-equivalence", Box::new(gp_oracle_equivalence)),
        ("2 heteroscedastic-ordering", Box::new(|| heteroscedastic_ordering(&dir("hetero")))),
        ("3 risk-monotonicity", Box::new(|| theory(TheoryCheck::RiskMonotonicity))),
        ("4 quantile-risk", Box::new(|| theory(TheoryCheck::QuantileRisk))),
        ("5 additive-uncertainty", Box::new(additive_uncertainty)),
        ("6 baseline-sanity", Box::new(|| baseline_sanity(&dir("forrester")))),
        ("7 metric-formulas", Box::new(metric_formulas)),
        ("8 protocol-conformance", Box::new(|| protocol_conformance(&dir("wire")))),
        ("9 golden-values", Box::new(golden_values)),
    ];
    let mut failures = 0;
    let mut results = BTreeMap::new();
    for (name, f) in &checks {
        if !filter.is_empty() && !filter.iter().any(|pat| name.contains(pat.as_str())) {
            continue;
        }
        let outcome = f();
        match &outcome {
            Ok(detail) => println!("acceptance {name}: PASS ({detail})"),
            Err(detail) => {
                failures += 1;
                println!("acceptance {name}: FAIL ({detail})");
            }
        }
        results.insert(*name, outcome.is_ok());
    }
    println!("acceptance: {} passed, {failures} failed", results.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
