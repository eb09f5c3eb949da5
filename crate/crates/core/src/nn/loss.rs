//! Batch-mean losses and their gradients with respect to the network outputs.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;

use super::mlp::{sigmoid, softplus};
use crate::error::{Error, Result};

/// Lower bound on the Gaussian variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    Mse,
    SoftmaxCe,
    /// Predictions are `(mu, s)` per row with `sigma^2 = softplus(s)`.
    GaussianNll,
    Distill {
        temperature: f64,
        lambda: f64,
    },
}

impl LossKind {
    pub fn distill(temperature: f64, lambda: f64) -> Result<Self> {
        if !(temperature > 0.0) || !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!(
                "distillation needs T > 0 and lambda in [0, 1], got T={temperature}, lambda={lambda}"
            )));
        }
        Ok(LossKind::Distill { temperature, lambda })
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Mse => write!(f, "mse"),
            LossKind::SoftmaxCe => write!(f, "softmax_ce"),
            LossKind::GaussianNll => write!(f, "gaussian_nll"),
            LossKind::Distill { temperature, lambda } => write!(f, "distill(T={temperature}, lambda={lambda})"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    /// Real-valued targets, same width as the predictions (or 1 for Gaussian NLL).
    Values(&'a DMatrix<f64>),
    /// Integer class labels.
    Classes(&'a [usize]),
    /// A probability vector per row.
    Probs(&'a DMatrix<f64>),
}

/// `sigma^2 = max(softplus(s), floor)` and its derivative in `s`.
pub fn variance_from_raw(s: f64) -> (f64, f64) {
    let v = softplus(s);
    if v > VARIANCE_FLOOR {
        (v, sigmoid(s))
    } else {
        (VARIANCE_FLOOR, 0.0)
    }
}

pub fn log_softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.max();
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.apply(|v| *v -= lse);
    }
    out
}

pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row.apply(|v| *v /= s);
    }
    out
}

fn check_rows(preds: &DMatrix<f64>, rows: usize) -> Result<()> {
    if preds.nrows() != rows {
        return Err(Error::Shape(format!("{} predictions for {rows} targets", preds.nrows())));
    }
    if rows == 0 {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    Ok(())
}

/// Target probabilities for cross-entropy.
fn target_probs(targets: &Targets<'_>, rows: usize, classes: usize) -> Result<DMatrix<f64>> {
    match targets {
        Targets::Classes(labels) => {
            check_len(labels.len(), rows)?;
            let mut p = DMatrix::zeros(rows, classes);
            for (i, &y) in labels.iter().enumerate() {
                if y >= classes {
                    return Err(Error::Shape(format!("label {y} out of range for {classes} classes")));
                }
                p[(i, y)] = 1.0;
            }
            Ok(p)
        }
        Targets::Probs(p) => {
            if p.shape() != (rows, classes) {
                return Err(Error::Shape(format!(
                    "target probabilities are {}x{}, expected {rows}x{classes}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            Ok((*p).clone())
        }
        Targets::Values(_) => Err(Error::Shape("cross-entropy needs class labels or probabilities".into())),
    }
}

fn check_len(len: usize, rows: usize) -> Result<()> {
    if len != rows {
        return Err(Error::Shape(format!("{len} labels for {rows} predictions")));
    }
    Ok(())
}

/// Mean cross-entropy `-sum p log softmax(logits)` and its gradient.
fn cross_entropy(logits: &DMatrix<f64>, probs: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let b = logits.nrows() as f64;
    let logp = log_softmax_rows(logits);
    let loss = -probs.component_mul(&logp).sum() / b;
    let q = logp.map(f64::exp);
    // Each target row sums to one, so d/dz = q - p.
    let row_mass: Vec<f64> = probs.row_iter().map(|r| r.sum()).collect();
    let mut grad = q;
    for (i, mut row) in grad.row_iter_mut().enumerate() {
        row *= row_mass[i];
    }
    grad -= probs;
    (loss, grad / b)
}

/// Loss averaged over the batch and its gradient with respect to `preds`.
/// `aux` carries teacher logits for distillation.
pub fn loss_and_grad(
    kind: LossKind,
    preds: &DMatrix<f64>,
    targets: &Targets<'_>,
    aux: Option<&DMatrix<f64>>,
) -> Result<(f64, DMatrix<f64>)> {
    let (rows, cols) = preds.shape();
    let b = rows as f64;
    match kind {
        LossKind::Mse => {
            let Targets::Values(y) = targets else {
                return Err(Error::Shape("MSE needs real-valued targets".into()));
            };
            check_rows(preds, y.nrows())?;
            if y.ncols() != cols {
                return Err(Error::Shape(format!("targets have {} columns, predictions {cols}", y.ncols())));
            }
            let diff = preds - *y;
            Ok((diff.norm_squared() / b, diff * (2.0 / b)))
        }
        LossKind::GaussianNll => {
            let Targets::Values(y) = targets else {
                return Err(Error::Shape("Gaussian NLL needs real-valued targets".into()));
            };
            check_rows(preds, y.nrows())?;
            if cols != 2 || y.ncols() != 1 {
                return Err(Error::Shape("Gaussian NLL needs (mu, s) predictions and one target column".into()));
            }
            let mut loss = 0.0;
            let mut grad = DMatrix::zeros(rows, 2);
            for i in 0..rows {
                let (var, dvar) = variance_from_raw(preds[(i, 1)]);
                let r = y[(i, 0)] - preds[(i, 0)];
                loss += 0.5 * (2.0 * PI * var).ln() + r * r / (2.0 * var);
                grad[(i, 0)] = -r / var / b;
                grad[(i, 1)] = (0.5 / var - r * r / (2.0 * var * var)) * dvar / b;
            }
            Ok((loss / b, grad))
        }
        LossKind::SoftmaxCe => {
            check_rows(
                preds,
                match targets {
                    Targets::Classes(l) => l.len(),
                    Targets::Probs(p) | Targets::Values(p) => p.nrows(),
                },
            )?;
            let p = target_probs(targets, rows, cols)?;
            Ok(cross_entropy(preds, &p))
        }
        LossKind::Distill { temperature, lambda } => {
            if !(temperature > 0.0) || !(0.0..=1.0).contains(&lambda) {
                return Err(Error::Config(format!("invalid distillation parameters T={temperature}, lambda={lambda}")));
            }
            let teacher = aux.ok_or_else(|| Error::MissingContext("distillation needs teacher logits".into()))?;
            if teacher.shape() != preds.shape() {
                return Err(Error::ModelMismatch(format!(
                    "teacher logits are {}x{}, student logits {rows}x{cols}",
                    teacher.nrows(),
                    teacher.ncols()
                )));
            }
            let Targets::Classes(labels) = targets else {
                return Err(Error::Shape("distillation needs hard class labels".into()));
            };
            check_rows(preds, labels.len())?;
            let hard = target_probs(targets, rows, cols)?;
            let soft = softmax_rows(&(teacher / temperature));
            let (soft_loss, soft_grad) = cross_entropy(&(preds / temperature), &soft);
            let (hard_loss, hard_grad) = cross_entropy(preds, &hard);
            let t2 = temperature * temperature;
            let loss = lambda * t2 * soft_loss + (1.0 - lambda) * hard_loss;
            // Chain rule through preds / T contributes 1/T, leaving a factor T.
            let grad = soft_grad * (lambda * temperature) + hard_grad * (1.0 - lambda);
            Ok((loss, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_nll_at_the_mean_with_unit_variance() {
        let s = (1.0f64.exp() - 1.0).ln();
        let preds = DMatrix::from_row_slice(1, 2, &[0.3, s]);
        let y = DMatrix::from_element(1, 1, 0.3);
        let (loss, _) = loss_and_grad(LossKind::GaussianNll, &preds, &Targets::Values(&y), None).unwrap();
        assert!((loss - 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!((loss - 0.9189).abs() < 1e-4);
    }

    #[test]
    fn variance_floor_guards_underflow() {
        let preds = DMatrix::from_row_slice(1, 2, &[0.0, -100.0]);
        let y = DMatrix::from_element(1, 1, 1.0);
        let (loss, grad) = loss_and_grad(LossKind::GaussianNll, &preds, &Targets::Values(&y), None).unwrap();
        assert!(loss.is_finite() && grad.iter().all(|g| g.is_finite()));
        assert_eq!(grad[(0, 1)], 0.0);
    }

    #[test]
    fn distill_with_zero_lambda_is_hard_cross_entropy() {
        let s = DMatrix::from_row_slice(2, 3, &[0.1, 2.0, -1.0, 0.5, 0.5, 3.0]);
        let t = DMatrix::from_row_slice(2, 3, &[5.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let labels = [1usize, 2];
        let (a, ga) =
            loss_and_grad(LossKind::distill(3.0, 0.0).unwrap(), &s, &Targets::Classes(&labels), Some(&t)).unwrap();
        let (b, gb) = loss_and_grad(LossKind::SoftmaxCe, &s, &Targets::Classes(&labels), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn saturated_teacher_reduces_to_hard_labels() {
        let s = DMatrix::from_row_slice(2, 3, &[0.1, 2.0, -1.0, 0.5, 0.5, 3.0]);
        let labels = [1usize, 0];
        let mut t = DMatrix::zeros(2, 3);
        t[(0, 1)] = 1e6;
        t[(1, 0)] = 1e6;
        let (a, _) =
            loss_and_grad(LossKind::distill(1.0, 1.0).unwrap(), &s, &Targets::Classes(&labels), Some(&t)).unwrap();
        let (b, _) = loss_and_grad(LossKind::SoftmaxCe, &s, &Targets::Classes(&labels), None).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn invalid_distill_parameters() {
        assert!(LossKind::distill(0.0, 0.5).is_err());
        assert!(LossKind::distill(1.0, 1.5).is_err());
        let s = DMatrix::zeros(1, 2);
        let err = loss_and_grad(LossKind::distill(1.0, 0.5).unwrap(), &s, &Targets::Classes(&[0]), None);
        assert!(matches!(err, Err(Error::MissingContext(_))));
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let z = DMatrix::from_row_slice(2, 3, &[1000.0, 0.0, -1000.0, 0.1, 0.2, 0.3]);
        let p = softmax_rows(&z);
        for row in p.row_iter() {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
