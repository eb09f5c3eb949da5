use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::model::{Task, TramModel};
use super::predict::{
    predict_conditional, predict_full_marg, predict_impute, predict_marginal, ImputeMode, Prediction,
};
use crate::error::{Error, Result};
use crate::synth::{Dataset, Label};

/// Floor on the probability of the observed label.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorKind {
    NoPI,
    ZeroImpute,
    MeanImpute,
    FullMarg(usize),
    Tram,
    HetTram,
    DistillNoPI,
    DistilledTram,
    OracleTeacher,
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorKind::NoPI => write!(f, "no_pi"),
            PredictorKind::ZeroImpute => write!(f, "zero_impute"),
            PredictorKind::MeanImpute => write!(f, "mean_impute"),
            PredictorKind::FullMarg(s) => write!(f, "full_marg_{s}"),
            PredictorKind::Tram => write!(f, "tram"),
            PredictorKind::HetTram => write!(f, "het_tram"),
            PredictorKind::DistillNoPI => write!(f, "distill_no_pi"),
            PredictorKind::DistilledTram => write!(f, "distilled_tram"),
            PredictorKind::OracleTeacher => write!(f, "oracle_teacher"),
        }
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "no_pi" => PredictorKind::NoPI,
            "zero_impute" => PredictorKind::ZeroImpute,
            "mean_impute" => PredictorKind::MeanImpute,
            "tram" => PredictorKind::Tram,
            "het_tram" => PredictorKind::HetTram,
            "distill_no_pi" => PredictorKind::DistillNoPI,
            "distilled_tram" => PredictorKind::DistilledTram,
            "oracle_teacher" => PredictorKind::OracleTeacher,
            other => {
                let n = other
                    .strip_prefix("full_marg_")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Parse(format!("unknown predictor '{other}'")))?;
                PredictorKind::FullMarg(n)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub nll: f64,
    /// Classification only.
    pub accuracy: Option<f64>,
    /// Only when a reference function is supplied.
    pub rmse_to_reference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub predictor: PredictorKind,
    pub seed: u64,
    pub metrics: Metrics,
    pub wall_ms: Option<u64>,
}

pub const RUN_CSV_HEADER: &str = "predictor,seed,nll,accuracy,rmse_to_reference,wall_ms";

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

impl RunResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{},{},{}",
            self.predictor,
            self.seed,
            self.metrics.nll,
            opt_field(self.metrics.accuracy),
            opt_field(self.metrics.rmse_to_reference),
            self.wall_ms.map(|w| w.to_string()).unwrap_or_default()
        )
    }
}

/// What the evaluated predictor may need besides the model.
#[derive(Clone, Copy, Default)]
pub struct EvalContext<'a> {
    /// Encoded training PI.
    pub pi_pool: Option<&'a nalgebra::DMatrix<f64>>,
    /// Reference mean (regression) or class-1 probability (binary classification).
    pub reference: Option<&'a dyn Fn(f64) -> f64>,
    pub seed: u64,
}

fn check_kind(kind: PredictorKind, model: &TramModel) -> Result<()> {
    let needs_pi = matches!(
        kind,
        PredictorKind::ZeroImpute
            | PredictorKind::MeanImpute
            | PredictorKind::FullMarg(_)
            | PredictorKind::Tram
            | PredictorKind::HetTram
            | PredictorKind::DistilledTram
            | PredictorKind::OracleTeacher
    );
    let no_pi = matches!(kind, PredictorKind::NoPI | PredictorKind::DistillNoPI);
    if needs_pi && !model.has_pi_path() {
        return Err(Error::ModelMismatch(format!("{kind} needs a model with a PI path")));
    }
    if no_pi && model.has_pi_path() {
        return Err(Error::ModelMismatch(format!("{kind} expects a model built without PI")));
    }
    if (kind == PredictorKind::HetTram) != model.het_w.is_some() {
        return Err(Error::ModelMismatch(format!("{kind} and the model disagree on the variance head")));
    }
    Ok(())
}

pub fn predict_kind(
    kind: PredictorKind,
    model: &TramModel,
    data: &Dataset,
    ctx: &EvalContext<'_>,
) -> Result<Prediction> {
    check_kind(kind, model)?;
    let x = data.x_matrix();
    match kind {
        PredictorKind::NoPI
        | PredictorKind::Tram
        | PredictorKind::HetTram
        | PredictorKind::DistillNoPI
        | PredictorKind::DistilledTram => predict_marginal(model, &x),
        PredictorKind::ZeroImpute => predict_impute(model, &x, ImputeMode::Zero, None),
        PredictorKind::MeanImpute => predict_impute(model, &x, ImputeMode::Mean, ctx.pi_pool),
        PredictorKind::FullMarg(s) => {
            let pool =
                ctx.pi_pool.ok_or_else(|| Error::MissingContext("full marginalization needs the PI pool".into()))?;
            predict_full_marg(model, &x, pool, s, ctx.seed)
        }
        PredictorKind::OracleTeacher => predict_conditional(model, &x, &data.a_matrix()),
    }
}

/// NLL, accuracy and distance to the reference for a prediction.
pub fn score(pred: &Prediction, data: &Dataset, reference: Option<&dyn Fn(f64) -> f64>) -> Result<Metrics> {
    if pred.len() != data.len() || data.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} records", pred.len(), data.len())));
    }
    let n = data.len() as f64;
    let (nll, accuracy) = match pred {
        Prediction::Probs(p) => {
            let mut nll = 0.0;
            let mut hits = 0usize;
            for (i, r) in data.records.iter().enumerate() {
                let Label::Class(y) = r.y else {
                    return Err(Error::ModelMismatch("probabilities scored against real labels".into()));
                };
                if y >= p.ncols() {
                    return Err(Error::Shape(format!("label {y} outside {} classes", p.ncols())));
                }
                nll -= p[(i, y)].max(PROB_FLOOR).ln();
                hits += usize::from(p.row(i).transpose().argmax().0 == y);
            }
            (nll / n, Some(hits as f64 / n))
        }
        Prediction::Gaussian { mean, var } => {
            let mut nll = 0.0;
            for (i, r) in data.records.iter().enumerate() {
                let Label::Real(y) = r.y else {
                    return Err(Error::ModelMismatch("Gaussian prediction scored against class labels".into()));
                };
                nll += 0.5 * (2.0 * PI * var[i]).ln() + (y - mean[i]).powi(2) / (2.0 * var[i]);
            }
            (nll / n, None)
        }
    };
    let rmse_to_reference = match reference {
        None => None,
        Some(f) => {
            if let Prediction::Probs(p) = pred {
                if p.ncols() != 2 {
                    return Err(Error::ModelMismatch("a probability reference needs a binary task".into()));
                }
            }
            let sse: f64 = data.records.iter().enumerate().map(|(i, r)| (pred.point(i) - f(r.x[0])).powi(2)).sum();
            Some((sse / n).sqrt())
        }
    };
    Ok(Metrics { nll, accuracy, rmse_to_reference })
}

pub fn evaluate(kind: PredictorKind, model: &TramModel, data: &Dataset, ctx: &EvalContext<'_>) -> Result<RunResult> {
    let pred = predict_kind(kind, model, data, ctx)?;
    let metrics = score(&pred, data, ctx.reference)?;
    if let (Task::Regression, Some(_)) = (model.task(), metrics.accuracy) {
        return Err(Error::ModelMismatch("accuracy reported for a regression model".into()));
    }
    Ok(RunResult { predictor: kind, seed: ctx.seed, metrics, wall_ms: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{LabelKind, Latent, PiTriplet};
    use nalgebra::DMatrix;

    fn class_data(labels: &[usize], classes: usize) -> Dataset {
        Dataset {
            a_raw_names: vec!["a".into()],
            label_kind: LabelKind::Class { classes },
            records: labels
                .iter()
                .map(|&y| PiTriplet {
                    x: vec![0.0],
                    a_raw: vec![0.0],
                    a_encoded: vec![0.0],
                    y: Label::Class(y),
                    latent: Latent::default(),
                })
                .collect(),
        }
    }

    #[test]
    fn uniform_classifier_has_log_c_nll() {
        let data = class_data(&[0, 1, 2, 3, 1], 4);
        let m = score(&Prediction::Probs(DMatrix::from_element(5, 4, 0.25)), &data, None).unwrap();
        assert!((m.nll - 4f64.ln()).abs() < 1e-12);
        assert!(m.rmse_to_reference.is_none());
    }

    #[test]
    fn perfect_predictor() {
        let labels = [2, 0, 1];
        let data = class_data(&labels, 3);
        let p = DMatrix::from_fn(3, 3, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
        let m = score(&Prediction::Probs(p.clone()), &data, None).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.nll, 0.0);
        // a confidently wrong prediction is clamped at the floor
        let wrong = DMatrix::from_fn(3, 3, |i, j| if (labels[i] + 1) % 3 == j { 1.0 } else { 0.0 });
        let m = score(&Prediction::Probs(wrong), &data, None).unwrap();
        assert!((m.nll + PROB_FLOOR.ln()).abs() < 1e-9);
        assert_eq!(m.accuracy, Some(0.0));
    }

    #[test]
    fn kinds_round_trip_through_text() {
        for k in [
            PredictorKind::NoPI,
            PredictorKind::ZeroImpute,
            PredictorKind::MeanImpute,
            PredictorKind::FullMarg(1000),
            PredictorKind::Tram,
            PredictorKind::HetTram,
            PredictorKind::DistillNoPI,
            PredictorKind::DistilledTram,
            PredictorKind::OracleTeacher,
        ] {
            assert_eq!(k.to_string().parse::<PredictorKind>().unwrap(), k);
        }
        assert!("full_marg_0".parse::<PredictorKind>().is_err());
        assert!("nope".parse::<PredictorKind>().is_err());
    }

    #[test]
    fn csv_row_leaves_missing_metrics_empty() {
        let r = RunResult {
            predictor: PredictorKind::Tram,
            seed: 3,
            metrics: Metrics { nll: 0.5, accuracy: None, rmse_to_reference: None },
            wall_ms: None,
        };
        assert_eq!(r.csv_row(), "tram,3,5.00000000000000000e-1,,,");
        assert_eq!(RUN_CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }
}
