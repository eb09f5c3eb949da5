//! Linear probes on frozen features.

use nalgebra::{DMatrix, DVector};

use super::model::{Task, TramModel};
use crate::error::{Error, Result};
use crate::nn::softmax_rows;
use crate::synth::Dataset;

pub const PROBE_L2: f64 = 1e-3;
pub const LOGISTIC_GRAD_TOL: f64 = 1e-6;
pub const LOGISTIC_MAX_ITERS: usize = 10_000;

/// Minimizes `(1/n)||y - Fw - b||² + λ||w||²`; the intercept is not penalized.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeProbe {
    pub weights: DVector<f64>,
    pub intercept: f64,
}

fn column_means(f: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(f.ncols(), |j, _| f.column(j).mean())
}

impl RidgeProbe {
    pub fn fit(features: &DMatrix<f64>, y: &[f64], l2: f64) -> Result<Self> {
        let (n, p) = features.shape();
        if n == 0 || y.len() != n {
            return Err(Error::Shape(format!("{n} feature rows for {} targets", y.len())));
        }
        if !(l2 >= 0.0) {
            return Err(Error::Config(format!("ridge penalty must be nonnegative, got {l2}")));
        }
        let mean_f = column_means(features);
        let mean_y = y.iter().sum::<f64>() / n as f64;
        let mut fc = features.clone();
        for mut row in fc.row_iter_mut() {
            row -= mean_f.transpose();
        }
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));
        let mut gram = fc.tr_mul(&fc) / n as f64;
        for j in 0..p {
            gram[(j, j)] += l2;
        }
        let rhs = fc.tr_mul(&yc) / n as f64;
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.amax();
        if eig.eigenvalues.min() <= 1e-12 * max.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular("ridge system is singular".into()));
        }
        let weights =
            gram.cholesky().ok_or_else(|| Error::Singular("ridge system is not positive definite".into()))?.solve(&rhs);
        let intercept = mean_y - mean_f.dot(&weights);
        Ok(Self { weights, intercept })
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (features * &self.weights).iter().map(|v| v + self.intercept).collect()
    }
}

/// Multinomial logistic regression with class 0 as the reference logit,
/// fit by damped Newton steps on `(1/n) CE + λ||W||²`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticProbe {
    /// p × (C − 1).
    pub weights: DMatrix<f64>,
    pub intercepts: DVector<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

struct LogisticProblem<'a> {
    z: DMatrix<f64>,
    labels: &'a [usize],
    k: usize,
    l2: f64,
}

impl LogisticProblem<'_> {
    fn p(&self) -> usize {
        self.z.ncols() - 1
    }

    fn unpack(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.z.ncols(), self.k, theta.as_slice())
    }

    fn probs(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let logits = &self.z * self.unpack(theta);
        let mut full = DMatrix::zeros(self.z.nrows(), self.k + 1);
        full.columns_mut(1, self.k).copy_from(&logits);
        softmax_rows(&full)
    }

    fn penalty(&self, theta: &DVector<f64>) -> f64 {
        let w = self.unpack(theta);
        self.l2 * w.rows(0, self.p()).norm_squared()
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let q = self.probs(theta);
        let n = self.z.nrows() as f64;
        let ce: f64 = self.labels.iter().enumerate().map(|(i, &y)| -q[(i, y)].max(1e-300).ln()).sum();
        ce / n + self.penalty(theta)
    }

    fn grad_hess(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (n, d) = self.z.shape();
        let k = self.k;
        let q = self.probs(theta);
        let mut r = q.columns(1, k).into_owned();
        for (i, &y) in self.labels.iter().enumerate() {
            if y > 0 {
                r[(i, y - 1)] -= 1.0;
            }
        }
        let g_mat = self.z.tr_mul(&r) / n as f64;
        let mut grad = DVector::from_column_slice(g_mat.as_slice());
        let mut hess = DMatrix::zeros(d * k, d * k);
        for a in 0..k {
            for b in a..k {
                let weights: Vec<f64> = (0..n)
                    .map(|i| {
                        let (pa, pb) = (q[(i, a + 1)], q[(i, b + 1)]);
                        (if a == b { pa } else { 0.0 }) - pa * pb
                    })
                    .collect();
                let mut zw = self.z.clone();
                for (i, mut row) in zw.row_iter_mut().enumerate() {
                    row *= weights[i];
                }
                let block = self.z.tr_mul(&zw) / n as f64;
                hess.view_mut((a * d, b * d), (d, d)).copy_from(&block);
                if a != b {
                    hess.view_mut((b * d, a * d), (d, d)).copy_from(&block.transpose());
                }
            }
        }
        for a in 0..k {
            for j in 0..self.p() {
                let idx = a * d + j;
                grad[idx] += 2.0 * self.l2 * theta[idx];
                hess[(idx, idx)] += 2.0 * self.l2;
            }
        }
        (grad, hess)
    }
}

impl LogisticProbe {
    pub fn fit(features: &DMatrix<f64>, labels: &[usize], classes: usize, l2: f64) -> Result<Self> {
        let (n, p) = features.shape();
        if n == 0 || labels.len() != n {
            return Err(Error::Shape(format!("{n} feature rows for {} labels", labels.len())));
        }
        if classes < 2 || labels.iter().any(|&y| y >= classes) {
            return Err(Error::Config("labels must lie in 0..classes with at least 2 classes".into()));
        }
        let mut z = DMatrix::from_element(n, p + 1, 1.0);
        z.columns_mut(0, p).copy_from(features);
        let prob = LogisticProblem { z, labels, k: classes - 1, l2 };
        let mut theta = DVector::zeros((p + 1) * prob.k);
        let mut f = prob.objective(&theta);
        let mut iterations = 0;
        let mut grad_norm = f64::INFINITY;
        while iterations < LOGISTIC_MAX_ITERS {
            let (grad, mut hess) = prob.grad_hess(&theta);
            grad_norm = grad.norm();
            if grad_norm < LOGISTIC_GRAD_TOL {
                break;
            }
            iterations += 1;
            // a small ridge on the Newton system keeps separable or
            // unpenalized directions solvable
            let dim = hess.nrows();
            let mut jitter = 1e-10;
            let direction = loop {
                if let Some(ch) = hess.clone().cholesky() {
                    break -ch.solve(&grad);
                }
                for i in 0..dim {
                    hess[(i, i)] += jitter;
                }
                jitter *= 10.0;
                if jitter > 1e3 {
                    break -grad.clone();
                }
            };
            let slope = grad.dot(&direction);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &theta + &direction * t;
                let fc = prob.objective(&cand);
                if fc <= f + 1e-4 * t * slope {
                    theta = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let w = prob.unpack(&theta);
        Ok(Self { weights: w.rows(0, p).into_owned(), intercepts: w.row(p).transpose(), iterations, grad_norm })
    }

    pub fn classes(&self) -> usize {
        self.intercepts.len() + 1
    }

    pub fn predict_proba(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        let mut logits = DMatrix::zeros(features.nrows(), self.classes());
        let mut lin = features * &self.weights;
        for mut row in lin.row_iter_mut() {
            row += self.intercepts.transpose();
        }
        logits.columns_mut(1, self.classes() - 1).copy_from(&lin);
        softmax_rows(&logits)
    }

    pub fn predict_class(&self, features: &DMatrix<f64>) -> Vec<usize> {
        self.predict_proba(features).row_iter().map(|r| r.transpose().argmax().0).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    Ridge(RidgeProbe),
    Logistic(LogisticProbe),
}

impl Probe {
    /// Predicted mean, or probability of class 1.
    pub fn predict_point(&self, features: &DMatrix<f64>) -> Vec<f64> {
        match self {
            Probe::Ridge(r) => r.predict(features),
            Probe::Logistic(l) => l.predict_proba(features).column(1).iter().copied().collect(),
        }
    }
}

/// Fits a probe on the frozen φ of `model`.
pub fn linear_probe(model: &TramModel, data: &Dataset, l2: f64) -> Result<Probe> {
    let feats = model.phi_features(&data.x_matrix())?;
    match model.task() {
        Task::Regression => {
            let y: Vec<f64> = data.records.iter().map(|r| r.y.as_f64()).collect();
            Ok(Probe::Ridge(RidgeProbe::fit(&feats, &y, l2)?))
        }
        Task::Classification { classes } => {
            Ok(Probe::Logistic(LogisticProbe::fit(&feats, &data.y_classes()?, classes, l2)?))
        }
    }
}
