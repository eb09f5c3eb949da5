//! Tab-separated data behind the curve, sweep and CMI figures. No rendering.

use std::fmt::Write as _;

use tramlab_core::{Error, Result};

use crate::bundle::ResultBundle;
use crate::config::Experiment;

/// Predictions of several methods on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    /// Name and values of the ground-truth column.
    pub reference: (String, Vec<f64>),
    pub columns: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    RegressionCurve,
    ClassificationCurve,
    Sweep,
    Cmi,
    Capacity,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::RegressionCurve => "regression_curve.tsv",
            PlotKind::ClassificationCurve => "classification_curve.tsv",
            PlotKind::Sweep => "sweep.tsv",
            PlotKind::Cmi => "cmi.tsv",
            PlotKind::Capacity => "capacity.tsv",
        }
    }

    fn experiment(self) -> Experiment {
        match self {
            PlotKind::RegressionCurve => Experiment::SynthRegression,
            PlotKind::ClassificationCurve => Experiment::SynthClassification,
            PlotKind::Sweep => Experiment::EpsSweep,
            PlotKind::Cmi => Experiment::CmiTable,
            PlotKind::Capacity => Experiment::AblateCapacity,
        }
    }
}

pub fn plot_kinds(experiment: Experiment) -> &'static [PlotKind] {
    match experiment {
        Experiment::SynthRegression => &[PlotKind::RegressionCurve],
        Experiment::SynthClassification => &[PlotKind::ClassificationCurve],
        Experiment::EpsSweep => &[PlotKind::Sweep],
        Experiment::CmiTable => &[PlotKind::Cmi],
        Experiment::AblateCapacity => &[PlotKind::Capacity],
        _ => &[],
    }
}

fn curve_tsv(curve: &Curve) -> String {
    let mut s = format!("x\t{}", curve.reference.0);
    for (name, _) in &curve.columns {
        s.push('\t');
        s.push_str(name);
    }
    s.push('\n');
    for (i, x) in curve.x.iter().enumerate() {
        let _ = write!(s, "{x:?}\t{:?}", curve.reference.1[i]);
        for (_, values) in &curve.columns {
            let _ = write!(s, "\t{:?}", values[i]);
        }
        s.push('\n');
    }
    s
}

/// Mean of `metric` for `predictor` at every value of the swept parameter
/// `key`, in order of appearance.
pub fn param_means(bundle: &ResultBundle, key: &str, predictor: &str, metric: &str) -> Vec<(f64, f64)> {
    let prefix = format!("{key}=");
    bundle
        .aggregate
        .iter()
        .filter(|e| e.predictor == predictor && e.metric == metric)
        .filter_map(|e| e.param.strip_prefix(&prefix).and_then(|v| v.parse().ok()).map(|v| (v, e.mean)))
        .collect()
}

fn paired_tsv(bundle: &ResultBundle, key: &str, metric: &str, columns: &[(&str, &str)]) -> String {
    let mut s = key.to_string();
    for (label, _) in columns {
        s.push('\t');
        s.push_str(label);
    }
    s.push('\n');
    let series: Vec<Vec<(f64, f64)>> = columns.iter().map(|(_, p)| param_means(bundle, key, p, metric)).collect();
    for (i, (x, _)) in series[0].iter().enumerate() {
        let _ = write!(s, "{x:?}");
        for col in &series {
            let _ = write!(s, "\t{:?}", col.get(i).map_or(f64::NAN, |p| p.1));
        }
        s.push('\n');
    }
    s
}

pub fn emit_plot_data(bundle: &ResultBundle, kind: PlotKind) -> Result<String> {
    if bundle.experiment != kind.experiment().name() {
        return Err(Error::Config(format!("{} data cannot come from a {} run", kind.file_name(), bundle.experiment)));
    }
    Ok(match kind {
        PlotKind::RegressionCurve | PlotKind::ClassificationCurve => {
            let curve = bundle.curve.as_ref().ok_or_else(|| Error::MissingContext("bundle has no curve".into()))?;
            curve_tsv(curve)
        }
        PlotKind::Sweep => {
            paired_tsv(bundle, "eps", "probe_rmse", &[("rmse_pi", "probe_pi"), ("rmse_no_pi", "probe_no_pi")])
        }
        PlotKind::Cmi => paired_tsv(bundle, "eps", "cmi_nats", &[("cmi_nats", "cmi")]),
        PlotKind::Capacity => {
            paired_tsv(bundle, "width", "probe_rmse", &[("rmse_pi", "probe_pi"), ("rmse_no_pi", "probe_no_pi")])
        }
    })
}

pub fn plot_files(bundle: &ResultBundle) -> Result<Vec<(&'static str, String)>> {
    let experiment: Experiment = bundle.experiment.parse()?;
    plot_kinds(experiment).iter().map(|&k| Ok((k.file_name(), emit_plot_data(bundle, k)?))).collect()
}
