//! Per-run rows, their aggregate and the files written for a run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tramlab_core::{Error, Result};

use crate::plot::Curve;

pub const CODE_VERSION: &str = concat!("tramlab ", env!("CARGO_PKG_VERSION"));

/// One (predictor, parameter, seed) result. `param` is empty when the
/// experiment has no swept parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub predictor: String,
    pub param: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

impl Row {
    pub fn new(predictor: impl Into<String>, param: impl Into<String>, seed: u64) -> Self {
        Self { predictor: predictor.into(), param: param.into(), seed, metrics: BTreeMap::new() }
    }

    pub fn with(mut self, metric: &str, value: f64) -> Self {
        self.metrics.insert(metric.to_string(), value);
        self
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateEntry {
    pub predictor: String,
    pub param: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single seed.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Mean and std per (predictor, param, metric), groups in order of first
/// appearance and metrics sorted by name.
pub fn aggregate(rows: &[Row]) -> Vec<AggregateEntry> {
    let mut groups: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !groups.contains(&(r.predictor.as_str(), r.param.as_str())) {
            groups.push((&r.predictor, &r.param));
        }
    }
    let mut out = Vec::new();
    for (predictor, param) in groups {
        let members: Vec<&Row> = rows.iter().filter(|r| r.predictor == predictor && r.param == param).collect();
        let names: BTreeSet<&str> = members.iter().flat_map(|r| r.metrics.keys().map(String::as_str)).collect();
        for metric in names {
            let values: Vec<f64> = members.iter().filter_map(|r| r.metric(metric)).collect();
            let (mean, std) = mean_std(&values);
            out.push(AggregateEntry {
                predictor: predictor.to_string(),
                param: param.to_string(),
                metric: metric.to_string(),
                n: values.len(),
                mean,
                std,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seeds: Vec<u64>,
    pub code_version: String,
    /// Only recorded on request, so that reruns stay byte-identical.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub experiment: String,
    pub config: String,
    pub rows: Vec<Row>,
    pub aggregate: Vec<AggregateEntry>,
    pub checks: Vec<CheckOutcome>,
    pub provenance: Provenance,
    #[serde(skip)]
    pub curve: Option<Curve>,
    /// Free text written next to the results (theory report).
    #[serde(skip)]
    pub report: Option<String>,
}

impl ResultBundle {
    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn metric_names(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.metrics.keys()).collect();
        names.into_iter().cloned().collect()
    }

    /// `predictor,param,seed,<metrics...>`, floats in shortest round-trip form
    /// and missing metrics left empty.
    pub fn to_csv(&self) -> String {
        let names = self.metric_names();
        let mut s = String::from("predictor,param,seed");
        for n in &names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{}", r.predictor, r.param, r.seed);
            for n in &names {
                s.push(',');
                if let Some(v) = r.metric(n) {
                    let _ = write!(s, "{v:?}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(format!("json: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

/// Read rows back from [`ResultBundle::to_csv`] output.
pub fn rows_from_csv(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Empty("csv has no header".into()))?.split(',').collect();
    if header.len() < 3 || header[..3] != ["predictor", "param", "seed"] {
        return Err(Error::Parse("unexpected csv header".into()));
    }
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(Error::Parse(format!("expected {} fields: `{line}`", header.len())));
            }
            let seed = fields[2].parse().map_err(|_| Error::Parse(format!("bad seed `{}`", fields[2])))?;
            let mut row = Row::new(fields[0], fields[1], seed);
            for (name, v) in header[3..].iter().zip(&fields[3..]) {
                if !v.is_empty() {
                    let value = v.parse().map_err(|_| Error::Parse(format!("bad value `{v}`")))?;
                    row.metrics.insert(name.to_string(), value);
                }
            }
            Ok(row)
        })
        .collect()
}

/// results.csv, results.json, plotdata/*.tsv and any report text.
pub fn write_outputs(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Config(format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("results.csv"), bundle.to_csv()).map_err(io)?;
    fs::write(dir.join("results.json"), bundle.to_json()?).map_err(io)?;
    let plots = crate::plot::plot_files(bundle)?;
    if !plots.is_empty() {
        let plot_dir = dir.join("plotdata");
        fs::create_dir_all(&plot_dir).map_err(io)?;
        for (name, text) in plots {
            fs::write(plot_dir.join(name), text).map_err(io)?;
        }
    }
    if let Some(report) = &bundle.report {
        fs::write(dir.join("report.txt"), report).map_err(io)?;
    }
    Ok(())
}
