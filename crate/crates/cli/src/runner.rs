//! Executes the problem x ratio x fold x trial grid and appends one JSON line
//! per algorithm and cell.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, ensure, Context};
use fire_core::baselines::{ar1_fit, nargp_fit, resgp_fit};
use fire_core::benchmarks::{self, make_splits, Design, Problem, Split, SplitPlan};
use fire_core::metrics::{nll, nrmse, r2, MetricRecord};
use fire_core::seed::{hash_str, mix};
use fire_core::{fire_fit, fire_fit_recursive, FidelityBlock, FireSpec, MultiFidelityDataset, MultiFidelityModel};
use log::{info, warn};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{is_csv, AlgorithmConfig, AlgorithmKind, RunConfig};

pub const SCHEMA: u32 = 1;
pub const RESULTS_FILE: &str = "results.jsonl";
pub const MANIFEST_FILE: &str = "run-manifest.json";

/// One line of `results.jsonl`. Failed fits carry `error` and no metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub schema: u32,
    pub problem: String,
    pub ratio: f64,
    pub fold: usize,
    pub trial: usize,
    pub algorithm: String,
    pub seed: u64,
    #[serde(default)]
    pub nrmse: Option<f64>,
    #[serde(default)]
    pub nll: Option<f64>,
    #[serde(default)]
    pub r2: Option<f64>,
    #[serde(default)]
    pub runtime_seconds: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

type LineKey = (String, u64, usize, usize, String);

impl ResultLine {
    pub fn key(&self) -> LineKey {
        (self.problem.clone(), self.ratio.to_bits(), self.fold, self.trial, self.algorithm.clone())
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn record(&self) -> Option<MetricRecord> {
        if self.failed() {
            return None;
        }
        Some(MetricRecord {
            problem: self.problem.clone(),
            ratio: self.ratio,
            fold: self.fold,
            trial: self.trial,
            algorithm: self.algorithm.clone(),
            nrmse: self.nrmse?,
            nll: self.nll?,
            r2: self.r2?,
            runtime_seconds: self.runtime_seconds?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub version: String,
    pub config_hash: String,
    pub cells: usize,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub cells: usize,
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// A benchmark source: a catalog problem or a loaded CSV dataset.
pub enum Source {
    Catalog(Problem),
    Csv { name: String, data: MultiFidelityDataset },
}

impl Source {
    pub fn resolve(spec: &str) -> anyhow::Result<Self> {
        if is_csv(spec) {
            let data = MultiFidelityDataset::from_csv_path(spec).with_context(|| format!("cannot load {spec}"))?;
            let name = Path::new(spec)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            Ok(Source::Csv { name, data })
        } else {
            Ok(Source::Catalog(benchmarks::problem(spec)?))
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Source::Catalog(p) => &p.name,
            Source::Csv { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub source: usize,
    pub problem: String,
    pub ratio: f64,
    pub fold: usize,
    pub trial: usize,
    /// Shared by every algorithm in the cell.
    pub seed: u64,
}

pub fn cell_seed(seed: u64, problem: &str, ratio: f64, fold: usize, trial: usize) -> u64 {
    let s = mix(seed, hash_str(problem));
    let s = mix(s, ratio.to_bits());
    mix(mix(s, fold as u64), trial as u64)
}

pub fn grid(config: &RunConfig, sources: &[Source]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (i, src) in sources.iter().enumerate() {
        for &ratio in &config.ratios {
            for fold in 0..config.folds {
                for trial in 0..config.trials {
                    cells.push(Cell {
                        source: i,
                        problem: src.name().to_string(),
                        ratio,
                        fold,
                        trial,
                        seed: cell_seed(config.seed, src.name(), ratio, fold, trial),
                    });
                }
            }
        }
    }
    cells
}

/// Holds out fold `fold` of the top-fidelity rows (a fixed permutation per
/// dataset) and subsamples the training rows of the top fidelity from the
/// rest.
fn csv_split(name: &str, data: &MultiFidelityDataset, config: &RunConfig, cell: &Cell) -> anyhow::Result<Split> {
    let high = data.high();
    let n = high.len();
    ensure!(n >= config.folds, "{name}: {n} high-fidelity rows cannot fill {} folds", config.folds);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(config.seed, hash_str(name))));
    let (test, pool): (Vec<(usize, usize)>, Vec<(usize, usize)>) =
        order.into_iter().enumerate().partition(|(i, _)| i % config.folds == cell.fold);
    let test: Vec<usize> = test.into_iter().map(|(_, r)| r).collect();
    let pool: Vec<usize> = pool.into_iter().map(|(_, r)| r).collect();

    let base = data.blocks()[0].len() as f64;
    let n_hf = config.n_hf.unwrap_or((cell.ratio / 100.0 * base).round() as usize);
    ensure!(n_hf >= 1, "{name}: ratio {}% gives no high-fidelity points", cell.ratio);
    ensure!(
        n_hf <= pool.len(),
        "{name}: {n_hf} high-fidelity training rows requested but only {} are outside the test fold",
        pool.len()
    );
    let mut chosen: Vec<usize> = sample(&mut ChaCha8Rng::seed_from_u64(cell.seed), pool.len(), n_hf)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    chosen.sort_unstable();

    let mut blocks: Vec<FidelityBlock> = data.blocks()[..data.blocks().len() - 1].to_vec();
    blocks.push(FidelityBlock::new(
        high.fidelity(),
        high.x().select_rows(&chosen),
        high.y().select_rows(&chosen),
    )?);
    Ok(Split {
        train: MultiFidelityDataset::new(blocks)?,
        test_x: high.x().select_rows(&test),
        test_y: high.y().select_rows(&test),
    })
}

pub fn build_split(source: &Source, config: &RunConfig, cell: &Cell) -> anyhow::Result<Split> {
    match source {
        Source::Catalog(problem) => {
            let design = if config.nested { Design::Nested } else { Design::Disjoint };
            let mut plan = SplitPlan::new(cell.ratio, design, cell.fold, cell.seed);
            plan.lf_sizes = config.lf_sizes.clone();
            plan.n_hf = config.n_hf;
            plan.n_test = config.test_size;
            Ok(make_splits(problem, &plan)?)
        }
        Source::Csv { name, data } => csv_split(name, data, config, cell),
    }
}

pub fn fit_model(
    alg: &AlgorithmConfig,
    train: &MultiFidelityDataset,
    seed: u64,
) -> anyhow::Result<Box<dyn MultiFidelityModel>> {
    Ok(match alg.kind {
        AlgorithmKind::Fire | AlgorithmKind::FireRecursive => {
            let (base, residual) = alg.stage_factories()?;
            let spec = FireSpec {
                base,
                residual,
                mode: alg.mode,
                levels: alg.levels(),
            };
            if alg.kind == AlgorithmKind::Fire {
                Box::new(fire_fit(train, &spec, seed)?)
            } else {
                Box::new(fire_fit_recursive(train, &spec, seed)?)
            }
        }
        AlgorithmKind::Ar1 => Box::new(ar1_fit(train, &*alg.factory(alg.backend)?, seed)?),
        AlgorithmKind::Resgp => Box::new(resgp_fit(train, &*alg.factory(alg.backend)?, seed)?),
        AlgorithmKind::Nargp => Box::new(nargp_fit(train, &*alg.factory(alg.backend)?, alg.propagation, seed)?),
    })
}

pub struct Evaluation {
    pub nrmse: f64,
    pub nll: f64,
    pub r2: f64,
    pub runtime_seconds: f64,
}

/// Fits on the split's training data and scores on its test set; the
/// runtime covers fit and predict.
pub fn evaluate(alg: &AlgorithmConfig, split: &Split, seed: u64) -> anyhow::Result<Evaluation> {
    let start = Instant::now();
    let model = fit_model(alg, &split.train, seed)?;
    let pred = model.predict_high(&split.test_x)?;
    let runtime_seconds = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let eval = Evaluation {
        nrmse: nrmse(&split.test_y, &pred.mean)?,
        nll: nll(&split.test_y, &pred.mean, &pred.variance)?,
        r2: r2(&split.test_y, &pred.mean)?,
        runtime_seconds,
    };
    if ![eval.nrmse, eval.nll, eval.r2].iter().all(|v| v.is_finite()) {
        bail!("non-finite metric");
    }
    Ok(eval)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn line_for(cell: &Cell, alg: &AlgorithmConfig, outcome: anyhow::Result<Evaluation>) -> ResultLine {
    let mut line = ResultLine {
        schema: SCHEMA,
        problem: cell.problem.clone(),
        ratio: cell.ratio,
        fold: cell.fold,
        trial: cell.trial,
        algorithm: alg.name.clone(),
        seed: cell.seed,
        nrmse: None,
        nll: None,
        r2: None,
        runtime_seconds: None,
        error: None,
    };
    match outcome {
        Ok(e) => {
            line.nrmse = Some(e.nrmse);
            line.nll = Some(e.nll);
            line.r2 = Some(e.r2);
            line.runtime_seconds = Some(e.runtime_seconds);
        }
        Err(e) => line.error = Some(format!("{e:#}")),
    }
    line
}

/// Reads every complete line of a results file. Lines that do not parse,
/// such as one cut short by an interruption, are dropped.
pub fn read_results(path: &Path) -> anyhow::Result<(Vec<ResultLine>, usize)> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut lines = Vec::new();
    let mut dropped = 0;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultLine>(&line) {
            Ok(r) if r.schema == SCHEMA => lines.push(r),
            _ => dropped += 1,
        }
    }
    Ok((lines, dropped))
}

fn write_lines(path: &Path, lines: &[ResultLine]) -> anyhow::Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn results_path(dir: &Path) -> PathBuf {
    dir.join(RESULTS_FILE)
}

/// Runs every missing (cell, algorithm) pair. Without `resume` the results
/// file starts empty.
pub fn run_experiment(config: &RunConfig, resume: bool) -> anyhow::Result<RunSummary> {
    config.validate()?;
    let sources = config
        .problems
        .iter()
        .map(|p| Source::resolve(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cells = grid(config, &sources);
    let dir = &config.output;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let results = results_path(dir);
    let manifest_path = dir.join(MANIFEST_FILE);
    let hash = config.hash();

    let mut done: HashSet<LineKey> = HashSet::new();
    if resume && manifest_path.exists() {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .with_context(|| format!("cannot parse {}", manifest_path.display()))?;
        ensure!(
            manifest.config_hash == hash,
            "{} was produced by a different configuration; rerun without --resume",
            dir.display()
        );
    }
    if resume && results.exists() {
        let (lines, dropped) = read_results(&results)?;
        if dropped > 0 {
            warn!("dropping {dropped} incomplete result lines");
            write_lines(&results, &lines)?;
        }
        done.extend(lines.iter().map(ResultLine::key));
    } else {
        File::create(&results).with_context(|| format!("cannot create {}", results.display()))?;
    }
    let manifest = Manifest {
        schema: SCHEMA,
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        cells: cells.len(),
        config: config.clone(),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    let writer = Mutex::new(OpenOptions::new().append(true).open(&results)?);
    let summary = Mutex::new(RunSummary {
        cells: cells.len(),
        ..RunSummary::default()
    });
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build()?;
    let outcome: anyhow::Result<()> = pool.install(|| {
        cells.par_iter().try_for_each(|cell| {
            let pending: Vec<&AlgorithmConfig> = config
                .algorithms
                .iter()
                .filter(|a| {
                    !done.contains(&(
                        cell.problem.clone(),
                        cell.ratio.to_bits(),
                        cell.fold,
                        cell.trial,
                        a.name.clone(),
                    ))
                })
                .collect();
            summary.lock().unwrap().skipped += config.algorithms.len() - pending.len();
            if pending.is_empty() {
                return Ok(());
            }
            let split = catch_unwind(AssertUnwindSafe(|| build_split(&sources[cell.source], config, cell)))
                .unwrap_or_else(|p| Err(anyhow::anyhow!("panic: {}", panic_message(p))));
            for alg in pending {
                let outcome = match &split {
                    Ok(split) => catch_unwind(AssertUnwindSafe(|| evaluate(alg, split, cell.seed)))
                        .unwrap_or_else(|p| Err(anyhow::anyhow!("panic: {}", panic_message(p)))),
                    Err(e) => Err(anyhow::anyhow!("split failed: {e:#}")),
                };
                let line = line_for(cell, alg, outcome);
                if let Some(e) = &line.error {
                    warn!("{} on {} ratio {} fold {} trial {}: {e}", alg.name, cell.problem, cell.ratio, cell.fold, cell.trial);
                }
                let text = serde_json::to_string(&line)?;
                {
                    let mut f = writer.lock().unwrap();
                    writeln!(f, "{text}")?;
                    f.flush()?;
                }
                let mut s = summary.lock().unwrap();
                s.written += 1;
                s.failed += usize::from(line.failed());
            }
            Ok(())
        })
    });
    outcome?;
    let summary = summary.into_inner().unwrap();
    info!(
        "{} cells: {} records written, {} already present, {} failed",
        summary.cells, summary.written, summary.skipped, summary.failed
    );
    Ok(summary)
}
