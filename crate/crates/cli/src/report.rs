//! Aggregated reports over a results directory, written as CSV and JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fire_core::metrics::{
    average_rank, elo_ratings, normalized_score, raw_summary, win_rate_matrix, EloConfig, Metric, MetricRecord,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::runner::{read_results, results_path, SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Elo,
    Rank,
    Normscore,
    Winrate,
    Raw,
}

impl Aggregation {
    pub const ALL: [Self; 5] = [Self::Elo, Self::Rank, Self::Normscore, Self::Winrate, Self::Raw];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Elo => "elo",
            Self::Rank => "rank",
            Self::Normscore => "normscore",
            Self::Winrate => "winrate",
            Self::Raw => "raw",
        }
    }

    pub fn parse(name: &str) -> anyhow::Result<Self> {
        match Self::ALL.into_iter().find(|a| a.name() == name) {
            Some(a) => Ok(a),
            None => {
                let valid: Vec<&str> = Self::ALL.iter().map(|a| a.name()).collect();
                bail!("unknown aggregation '{name}'; valid: {}", valid.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportRequest {
    pub metric: Metric,
    pub aggregation: Aggregation,
    pub elo: EloConfig,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub csv: String,
    pub json: Value,
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub report: Report,
}

/// Successful records and the number of failed ones.
pub fn load_records(dir: &Path) -> anyhow::Result<(Vec<MetricRecord>, usize)> {
    let (lines, _) = read_results(&results_path(dir))?;
    let failed = lines.iter().filter(|l| l.failed()).count();
    let mut records: Vec<MetricRecord> = lines.iter().filter_map(|l| l.record()).collect();
    if records.is_empty() {
        bail!("{} holds no successful results", dir.display());
    }
    records.sort_by(|a, b| {
        (&a.problem, a.ratio, a.fold, a.trial, &a.algorithm)
            .partial_cmp(&(&b.problem, b.ratio, b.fold, b.trial, &b.algorithm))
            .expect("finite ratios")
    });
    Ok((records, failed))
}

fn csv_text(header: &[String], rows: Vec<Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn build_report(records: &[MetricRecord], request: &ReportRequest) -> anyhow::Result<Report> {
    let metric = request.metric;
    let (csv, result) = match request.aggregation {
        Aggregation::Elo => {
            let elo = elo_ratings(records, metric, &request.elo)?;
            let rows = elo
                .ratings
                .iter()
                .map(|r| vec![r.algorithm.clone(), r.rating.to_string(), r.ci_low.to_string(), r.ci_high.to_string()])
                .collect();
            (csv_text(&strings(&["algorithm", "rating", "ci_low", "ci_high"]), rows)?, serde_json::to_value(&elo)?)
        }
        Aggregation::Rank | Aggregation::Normscore => {
            let (column, values) = if request.aggregation == Aggregation::Rank {
                ("average_rank", average_rank(records, metric)?)
            } else {
                ("normalized_score", normalized_score(records, metric)?)
            };
            let rows = values.iter().map(|(a, v)| vec![a.clone(), v.to_string()]).collect();
            (csv_text(&strings(&["algorithm", column]), rows)?, serde_json::to_value(&values)?)
        }
        Aggregation::Winrate => {
            let m = win_rate_matrix(records, metric, request.elo.unit)?;
            let mut header = vec!["algorithm".to_string()];
            header.extend(m.algorithms.iter().cloned());
            let rows = m
                .algorithms
                .iter()
                .zip(&m.rates)
                .map(|(a, row)| {
                    let mut r = vec![a.clone()];
                    r.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
                    r
                })
                .collect();
            (csv_text(&header, rows)?, serde_json::to_value(&m)?)
        }
        Aggregation::Raw => {
            let summary = raw_summary(records, metric);
            let rows = summary
                .iter()
                .map(|s| {
                    vec![
                        s.problem.clone(),
                        s.ratio.to_string(),
                        s.algorithm.clone(),
                        s.count.to_string(),
                        s.mean.to_string(),
                        s.std.to_string(),
                    ]
                })
                .collect();
            let header = strings(&["problem", "ratio", "algorithm", "count", "mean", "std"]);
            (csv_text(&header, rows)?, serde_json::to_value(&summary)?)
        }
    };
    let json = json!({
        "schema": SCHEMA,
        "aggregation": request.aggregation.name(),
        "metric": metric.name(),
        "records": records.len(),
        "result": result,
    });
    Ok(Report { csv, json })
}

/// Writes `report-<aggregation>-<metric>.{csv,json}` into `out`.
pub fn write_report(dir: &Path, out: &Path, request: &ReportRequest) -> anyhow::Result<ReportFiles> {
    let (records, failed) = load_records(dir)?;
    let mut report = build_report(&records, request)?;
    report.json["failed_records"] = json!(failed);
    std::fs::create_dir_all(out)?;
    let stem = format!("report-{}-{}", request.aggregation.name(), request.metric.name());
    let csv = out.join(format!("{stem}.csv"));
    let json_path = out.join(format!("{stem}.json"));
    std::fs::write(&csv, &report.csv).with_context(|| format!("cannot write {}", csv.display()))?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&report.json)?)
        .with_context(|| format!("cannot write {}", json_path.display()))?;
    Ok(ReportFiles {
        csv,
        json: json_path,
        report,
    })
}
