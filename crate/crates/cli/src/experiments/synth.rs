//! Synthetic regression and classification runs, the ε sweep and the two
//! ablations.

use nalgebra::DMatrix;
use tramlab_core::kv::KvConfig;
use tramlab_core::rng::derive_seed;
use tramlab_core::synth::{
    gen_classification, gen_regression, true_marginal_regression, ClassificationOracle, ClassificationTaskSpec,
    Dataset, Label, LabelKind, Latent, PiTriplet, RegressionTaskSpec,
};
use tramlab_core::tram::{
    build_tram, evaluate, predict_kind, train_distill_no_pi, train_distilled, EvalContext, PredictorKind, TrainData,
    TramModel,
};
use tramlab_core::{Error, Result};

use super::repr::{
    grid, model_spec, probe_oracle_match, probe_rmse, task_of, train_at, train_selected, Representation, TrainOptions,
    Trained, TEST_STREAM, VALIDATION_STREAM,
};
use crate::bundle::Row;
use crate::plot::Curve;

pub const REGRESSION_GRID: usize = 1000;
pub const CLASSIFICATION_GRID: usize = 10_000;
const STUDENT_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillOptions {
    pub temperature: f64,
    pub lambda: f64,
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self { temperature: 3.0, lambda: 0.5 }
    }
}

impl DistillOptions {
    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        Ok(Self { temperature: cfg.parse_or("temperature", d.temperature)?, lambda: cfg.parse_or("lambda", d.lambda)? })
    }
}

/// Everything a seed of a synthetic experiment produces.
pub struct SeedRun {
    pub rows: Vec<Row>,
    pub curve: Option<Curve>,
    pub pi: Trained,
    pub no_pi: Trained,
    pub train: Dataset,
    pub test: Dataset,
}

/// Train, validation and test draws of one task.
fn draws<F: Fn(u64) -> Result<Dataset>>(gen: F, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    Ok((gen(seed)?, gen(derive_seed(seed, VALIDATION_STREAM))?, gen(derive_seed(seed, TEST_STREAM))?))
}

/// Records at the grid points with zero PI, for predictors that only read x.
fn grid_dataset(template: &Dataset, grid: &DMatrix<f64>) -> Dataset {
    let width = template.a_dim();
    let y = match template.label_kind {
        LabelKind::Real => Label::Real(0.0),
        LabelKind::Class { .. } => Label::Class(0),
    };
    Dataset {
        a_raw_names: template.a_raw_names.clone(),
        label_kind: template.label_kind,
        records: grid
            .iter()
            .map(|&x| PiTriplet {
                x: vec![x],
                a_raw: vec![0.0; width],
                a_encoded: vec![0.0; width],
                y,
                latent: Latent::default(),
            })
            .collect(),
    }
}

fn probe_row(repr: Representation, param: &str, seed: u64, t: &Trained, metric: &str, value: f64) -> Row {
    Row::new(repr.probe_name(), param, seed)
        .with(metric, value)
        .with("lr", t.lr)
        .with("validation_loss", t.validation_loss)
}

/// Extra models some predictors need, trained at the learning rate already
/// selected for their base representation.
fn model_for<'a>(
    kind: PredictorKind,
    pi: &'a Trained,
    no_pi: &'a Trained,
    train: &Dataset,
    opts: &TrainOptions,
    distill: DistillOptions,
    seed: u64,
    slot: &'a mut Option<TramModel>,
) -> Result<(&'a TramModel, f64)> {
    let student = |repr: Representation| {
        build_tram(model_spec(
            train.x_dim(),
            if repr == Representation::Pi { train.a_dim() } else { 0 },
            task_of(train),
            false,
            derive_seed(seed, STUDENT_STREAM),
            opts,
        ))
    };
    Ok(match kind {
        PredictorKind::NoPI => (&no_pi.model, no_pi.lr),
        PredictorKind::HetTram => (slot.insert(train_at(Representation::Pi, train, opts, seed, pi.lr, true)?), pi.lr),
        PredictorKind::DistilledTram => {
            let mut s = student(Representation::Pi)?;
            let cfg = opts.train_config(&s, seed, pi.lr);
            train_distilled(
                &pi.model,
                &mut s,
                &TrainData::from_dataset(train)?,
                &cfg,
                distill.temperature,
                distill.lambda,
            )?;
            (slot.insert(s), pi.lr)
        }
        PredictorKind::DistillNoPI => {
            let mut s = student(Representation::NoPi)?;
            let cfg = opts.train_config(&s, seed, no_pi.lr);
            train_distill_no_pi(
                &no_pi.model,
                &mut s,
                &TrainData::from_dataset(train)?,
                &cfg,
                distill.temperature,
                distill.lambda,
            )?;
            (slot.insert(s), no_pi.lr)
        }
        _ => (&pi.model, pi.lr),
    })
}

#[allow(clippy::too_many_arguments)]
fn predictor_rows(
    kinds: &[PredictorKind],
    pi: &Trained,
    no_pi: &Trained,
    train: &Dataset,
    test: &Dataset,
    opts: &TrainOptions,
    distill: DistillOptions,
    seed: u64,
    reference: &dyn Fn(f64) -> f64,
    curve_grid: Option<&Dataset>,
) -> Result<(Vec<Row>, Vec<(String, Vec<f64>)>)> {
    let pool = train.a_matrix();
    let ctx = EvalContext { pi_pool: Some(&pool), reference: Some(reference), seed };
    let mut rows = Vec::new();
    let mut columns = Vec::new();
    for &kind in kinds {
        let mut slot = None;
        let (model, lr) = model_for(kind, pi, no_pi, train, opts, distill, seed, &mut slot)?;
        let run = evaluate(kind, model, test, &ctx)?;
        let mut row = Row::new(kind.to_string(), "", seed).with("nll", run.metrics.nll).with("lr", lr);
        if let Some(a) = run.metrics.accuracy {
            row = row.with("accuracy", a);
        }
        if let Some(r) = run.metrics.rmse_to_reference {
            row = row.with("rmse_to_reference", r);
        }
        rows.push(row);
        if let (Some(g), false) = (curve_grid, kind == PredictorKind::OracleTeacher) {
            let pred = predict_kind(kind, model, g, &ctx)?;
            columns.push((kind.to_string(), (0..pred.len()).map(|i| pred.point(i)).collect()));
        }
    }
    Ok((rows, columns))
}

pub fn regression_seed(
    spec: &RegressionTaskSpec,
    opts: &TrainOptions,
    kinds: &[PredictorKind],
    seed: u64,
    with_curve: bool,
) -> Result<SeedRun> {
    if kinds.iter().any(|k| matches!(k, PredictorKind::DistilledTram | PredictorKind::DistillNoPI)) {
        return Err(Error::Config("distillation predictors need a classification task".into()));
    }
    let (train, validation, test) = draws(|s| gen_regression(spec, s), seed)?;
    let pi = train_selected(Representation::Pi, &train, &validation, opts, seed)?;
    let no_pi = train_selected(Representation::NoPi, &train, &validation, opts, seed)?;
    let g = grid(spec.x_domain.0, spec.x_domain.1, REGRESSION_GRID);
    let truth: Vec<f64> = g.iter().map(|&x| true_marginal_regression(spec, x)).collect();
    let (rmse_pi, curve_pi) = probe_rmse(&pi.model, &train, &g, &truth)?;
    let (rmse_no_pi, curve_no_pi) = probe_rmse(&no_pi.model, &train, &g, &truth)?;
    let mut rows = vec![
        probe_row(Representation::Pi, "", seed, &pi, "probe_rmse", rmse_pi),
        probe_row(Representation::NoPi, "", seed, &no_pi, "probe_rmse", rmse_no_pi),
    ];
    let grid_data = with_curve.then(|| grid_dataset(&train, &g));
    let reference = |x: f64| true_marginal_regression(spec, x);
    let (pred_rows, columns) = predictor_rows(
        kinds,
        &pi,
        &no_pi,
        &train,
        &test,
        opts,
        DistillOptions::default(),
        seed,
        &reference,
        grid_data.as_ref(),
    )?;
    rows.extend(pred_rows);
    let curve = with_curve.then(|| {
        let mut cols = vec![("probe_pi".to_string(), curve_pi), ("probe_no_pi".to_string(), curve_no_pi)];
        cols.extend(columns);
        Curve { x: g.iter().copied().collect(), reference: ("true_marginal".into(), truth), columns: cols }
    });
    Ok(SeedRun { rows, curve, pi, no_pi, train, test })
}

pub fn classification_seed(
    spec: &ClassificationTaskSpec,
    opts: &TrainOptions,
    kinds: &[PredictorKind],
    distill: DistillOptions,
    seed: u64,
    with_curve: bool,
) -> Result<SeedRun> {
    let oracle = ClassificationOracle::new(spec)?;
    let (train, validation, test) = draws(|s| gen_classification(spec, s), seed)?;
    let pi = train_selected(Representation::Pi, &train, &validation, opts, seed)?;
    let no_pi = train_selected(Representation::NoPi, &train, &validation, opts, seed)?;
    let g = grid(spec.x_domain.0, spec.x_domain.1, CLASSIFICATION_GRID);
    let oracle_classes: Vec<usize> = g.iter().map(|&x| oracle.class(x)).collect();
    let (match_pi, curve_pi) = probe_oracle_match(&pi.model, &train, &g, &oracle_classes)?;
    let (match_no_pi, curve_no_pi) = probe_oracle_match(&no_pi.model, &train, &g, &oracle_classes)?;
    let mut rows = vec![
        probe_row(Representation::Pi, "", seed, &pi, "oracle_match", match_pi),
        probe_row(Representation::NoPi, "", seed, &no_pi, "oracle_match", match_no_pi),
    ];
    let grid_data = with_curve.then(|| grid_dataset(&train, &g));
    let reference = |x: f64| oracle.prob_one(x);
    let (pred_rows, columns) =
        predictor_rows(kinds, &pi, &no_pi, &train, &test, opts, distill, seed, &reference, grid_data.as_ref())?;
    rows.extend(pred_rows);
    let curve = with_curve.then(|| {
        let mut cols = vec![("probe_pi".to_string(), curve_pi), ("probe_no_pi".to_string(), curve_no_pi)];
        cols.extend(columns);
        let prob: Vec<f64> = g.iter().map(|&x| oracle.prob_one(x)).collect();
        Curve { x: g.iter().copied().collect(), reference: ("oracle_prob_one".into(), prob), columns: cols }
    });
    Ok(SeedRun { rows, curve, pi, no_pi, train, test })
}

/// Probe RMSE of both representations at one noise level.
pub fn sweep_point(spec: &RegressionTaskSpec, opts: &TrainOptions, param: &str, seed: u64) -> Result<Vec<Row>> {
    let train = gen_regression(spec, seed)?;
    let validation = gen_regression(spec, derive_seed(seed, VALIDATION_STREAM))?;
    let g = grid(spec.x_domain.0, spec.x_domain.1, REGRESSION_GRID);
    let truth: Vec<f64> = g.iter().map(|&x| true_marginal_regression(spec, x)).collect();
    [Representation::Pi, Representation::NoPi]
        .into_iter()
        .map(|repr| {
            let t = train_selected(repr, &train, &validation, opts, seed)?;
            let (r, _) = probe_rmse(&t.model, &train, &g, &truth)?;
            Ok(probe_row(repr, param, seed, &t, "probe_rmse", r))
        })
        .collect()
}

/// Append the annotator's value `v` (zero for clean records) as a second PI column.
pub fn with_value_column(data: &Dataset) -> Dataset {
    let mut out = data.clone();
    out.a_raw_names.push("annotator_value".into());
    for r in &mut out.records {
        let v = if r.latent.is_noisy { r.latent.v } else { 0.0 };
        r.a_raw.push(v);
        r.a_encoded.push(v);
    }
    out
}

/// Keep only the PI columns not listed in `drop`.
pub fn drop_pi_columns(data: &Dataset, drop: &[usize]) -> Result<Dataset> {
    let width = data.a_dim();
    if let Some(&bad) = drop.iter().find(|&&c| c >= width) {
        return Err(Error::Config(format!("cannot drop PI column {bad}; there are {width}")));
    }
    let keep: Vec<usize> = (0..width).filter(|c| !drop.contains(c)).collect();
    let pick = |v: &[f64]| keep.iter().map(|&c| v[c]).collect::<Vec<f64>>();
    let mut out = data.clone();
    if data.a_raw_names.len() == width {
        out.a_raw_names = keep.iter().map(|&c| data.a_raw_names[c].clone()).collect();
    }
    for r in &mut out.records {
        r.a_encoded = pick(&r.a_encoded);
        if r.a_raw.len() == width {
            r.a_raw = pick(&r.a_raw);
        }
    }
    Ok(out)
}

/// `none`, or column indices joined by `+`.
pub fn parse_drop_variant(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if text == "none" {
        return Ok(Vec::new());
    }
    text.split('+').map(|s| s.trim().parse().map_err(|_| Error::Parse(format!("bad PI column `{s}`")))).collect()
}

pub fn ablate_pi_point(
    spec: &RegressionTaskSpec,
    opts: &TrainOptions,
    extra_value: bool,
    variant: &str,
    seed: u64,
) -> Result<Row> {
    let drop = parse_drop_variant(variant)?;
    let prepare = |d: Dataset| -> Result<Dataset> {
        let d = if extra_value { with_value_column(&d) } else { d };
        drop_pi_columns(&d, &drop)
    };
    let (train, validation, test) = draws(|s| prepare(gen_regression(spec, s)?), seed)?;
    let (repr, kind) = if train.a_dim() == 0 {
        (Representation::NoPi, PredictorKind::NoPI)
    } else {
        (Representation::Pi, PredictorKind::Tram)
    };
    let t = train_selected(repr, &train, &validation, opts, seed)?;
    let g = grid(spec.x_domain.0, spec.x_domain.1, REGRESSION_GRID);
    let truth: Vec<f64> = g.iter().map(|&x| true_marginal_regression(spec, x)).collect();
    let (probe, _) = probe_rmse(&t.model, &train, &g, &truth)?;
    let reference = |x: f64| true_marginal_regression(spec, x);
    let ctx = EvalContext { pi_pool: None, reference: Some(&reference), seed };
    let run = evaluate(kind, &t.model, &test, &ctx)?;
    Ok(Row::new(kind.to_string(), format!("drop={variant}"), seed)
        .with("probe_rmse", probe)
        .with("nll", run.metrics.nll)
        .with("rmse_to_reference", run.metrics.rmse_to_reference.unwrap_or(f64::NAN))
        .with("lr", t.lr))
}
