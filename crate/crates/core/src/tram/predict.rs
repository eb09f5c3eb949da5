use nalgebra::DMatrix;
use rand::Rng;

use super::het::{het_probs, HET_MC_SAMPLES, HET_PREDICT_SEED};
use super::model::{Task, TramModel};
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, variance_from_raw};
use crate::rng::{stream_rng, BoxMuller};

#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    /// One probability vector per row.
    Probs(DMatrix<f64>),
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

impl Prediction {
    pub fn len(&self) -> usize {
        match self {
            Prediction::Probs(p) => p.nrows(),
            Prediction::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Predicted mean (regression) or probability of class 1 (classification).
    pub fn point(&self, i: usize) -> f64 {
        match self {
            Prediction::Probs(p) => p[(i, 1)],
            Prediction::Gaussian { mean, .. } => mean[i],
        }
    }
}

/// Noise draws shared by every row, so a row's prediction does not depend
/// on what else is in the batch.
fn shared_noise(rows: usize, cols: usize) -> Vec<DMatrix<f64>> {
    let mut rng = stream_rng(HET_PREDICT_SEED, 0);
    let mut g = BoxMuller::new();
    (0..HET_MC_SAMPLES)
        .map(|_| {
            let e: Vec<f64> = (0..cols).map(|_| g.sample(&mut rng)).collect();
            DMatrix::from_fn(rows, cols, |_, j| e[j])
        })
        .collect()
}

fn from_raw(task: Task, raw: DMatrix<f64>) -> Prediction {
    match task {
        Task::Classification { .. } => Prediction::Probs(softmax_rows(&raw)),
        Task::Regression => {
            let n = raw.nrows();
            Prediction::Gaussian { mean: raw.column(0).iter().copied().collect(), var: vec![1.0; n] }
        }
    }
}

/// `q(y|x; w)`. Vanilla regression has unit variance; a variance head gives
/// `softplus(w_σᵀφ(x))`.
pub fn predict_marginal(model: &TramModel, x: &DMatrix<f64>) -> Result<Prediction> {
    let phi = model.phi_features(x)?;
    let raw = model.head_w.predict(&phi)?;
    let Some(het) = &model.het_w else {
        return Ok(from_raw(model.task(), raw));
    };
    let scale = het.predict(&phi)?;
    Ok(match model.task() {
        Task::Classification { .. } => {
            Prediction::Probs(het_probs(&raw, &scale, &shared_noise(raw.nrows(), raw.ncols()))?)
        }
        Task::Regression => Prediction::Gaussian {
            mean: raw.column(0).iter().copied().collect(),
            var: scale.column(0).iter().map(|&s| variance_from_raw(s).0).collect(),
        },
    })
}

/// `q(y|x, a; u)` through ψ.
pub fn predict_conditional(model: &TramModel, x: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Prediction> {
    Ok(from_raw(model.task(), model.conditional_raw(x, a)?))
}

fn repeat_row(a: &DMatrix<f64>, i: usize, rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, a.ncols(), |_, j| a[(i, j)])
}

/// Monte-Carlo marginalization of the conditional head over `s` PI vectors
/// from the pool: the whole pool in order when `s` equals its size,
/// uniform draws with replacement otherwise.
pub fn predict_full_marg(
    model: &TramModel,
    x: &DMatrix<f64>,
    pi_pool: &DMatrix<f64>,
    s: usize,
    seed: u64,
) -> Result<Prediction> {
    let pool = pi_pool.nrows();
    if pool == 0 {
        return Err(Error::Empty("PI pool is empty".into()));
    }
    if s == 0 || s > pool {
        return Err(Error::Config(format!("sample count {s} must be in 1..={pool}")));
    }
    let idx: Vec<usize> = if s == pool {
        (0..pool).collect()
    } else {
        let mut rng = stream_rng(seed, 0xf0f0);
        (0..s).map(|_| rng.random_range(0..pool)).collect()
    };
    let phi = model.phi_features(x)?;
    let rows = x.nrows();
    match model.task() {
        Task::Classification { classes } => {
            let mut acc = DMatrix::zeros(rows, classes);
            for &i in &idx {
                acc += softmax_rows(&model.conditional_from_phi(&phi, &repeat_row(pi_pool, i, rows))?);
            }
            Ok(Prediction::Probs(acc / s as f64))
        }
        Task::Regression => {
            let mut m1 = vec![0.0; rows];
            let mut m2 = vec![0.0; rows];
            for &i in &idx {
                let out = model.conditional_from_phi(&phi, &repeat_row(pi_pool, i, rows))?;
                for r in 0..rows {
                    m1[r] += out[(r, 0)];
                    m2[r] += out[(r, 0)] * out[(r, 0)] + 1.0;
                }
            }
            let mean: Vec<f64> = m1.iter().map(|v| v / s as f64).collect();
            let var = m2.iter().zip(&mean).map(|(v, m)| v / s as f64 - m * m).collect();
            Ok(Prediction::Gaussian { mean, var })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImputeMode {
    Zero,
    Mean,
}

/// Column means of the encoded PI pool.
pub fn pool_mean(pi_pool: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if pi_pool.nrows() == 0 {
        return Err(Error::Empty("PI pool is empty".into()));
    }
    Ok(DMatrix::from_fn(1, pi_pool.ncols(), |_, j| pi_pool.column(j).mean()))
}

pub fn predict_impute(
    model: &TramModel,
    x: &DMatrix<f64>,
    mode: ImputeMode,
    pi_pool: Option<&DMatrix<f64>>,
) -> Result<Prediction> {
    let width = model.spec.pi_dim;
    let a = match mode {
        ImputeMode::Zero => DMatrix::zeros(x.nrows(), width),
        ImputeMode::Mean => {
            let pool = pi_pool.ok_or_else(|| Error::MissingContext("mean imputation needs the PI pool".into()))?;
            repeat_row(&pool_mean(pool)?, 0, x.nrows())
        }
    };
    predict_conditional(model, x, &a)
}
