//! Training PI and no-PI representations with a learning-rate search, and
//! scoring them with linear probes.

use nalgebra::DMatrix;
use tramlab_core::kv::{parse_f64_list, KvConfig};
use tramlab_core::rng::derive_seed;
use tramlab_core::synth::Dataset;
use tramlab_core::tram::{
    build_tram, linear_probe, train_no_pi, train_one_step, Probe, PsiWiring, Task, TrainConfig, TrainData, TramModel,
    TramSpec, PROBE_L2, PROB_FLOOR,
};
use tramlab_core::{Error, Result};

pub const DEFAULT_LR_GRID: [f64; 4] = [1e-3, 3e-3, 1e-2, 3e-2];

pub const INIT_STREAM: u64 = 1;
pub const VALIDATION_STREAM: u64 = 0x7a11;
pub const TEST_STREAM: u64 = 0x7e57;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_grid: Vec<f64>,
    pub wiring: PsiWiring,
    /// Multiplies every hidden width.
    pub width_factor: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            wiring: PsiWiring::Concat,
            width_factor: 1.0,
        }
    }
}

impl TrainOptions {
    /// Keys `epochs`, `batch_size`, `lr_grid` (comma list), `wiring`, `width_factor`.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let lr_grid = match cfg.get("lr_grid") {
            Some(text) => parse_f64_list(text)?,
            None => d.lr_grid,
        };
        let opts = Self {
            epochs: cfg.parse_or("epochs", d.epochs)?,
            batch_size: cfg.parse_or("batch_size", d.batch_size)?,
            lr_grid,
            wiring: cfg.parse_or("wiring", d.wiring)?,
            width_factor: cfg.parse_or("width_factor", d.width_factor)?,
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|lr| !(*lr > 0.0) || !lr.is_finite()) {
            return Err(Error::Config("lr_grid needs positive learning rates".into()));
        }
        if !(self.width_factor > 0.0) || !self.width_factor.is_finite() {
            return Err(Error::Config(format!("width_factor must be positive, got {}", self.width_factor)));
        }
        Ok(())
    }

    pub fn train_config(&self, model: &TramModel, seed: u64, lr: f64) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: self.batch_size, lr, ..TrainConfig::for_model(model, seed) }
    }
}

fn scaled(width: usize, factor: f64) -> usize {
    ((width as f64 * factor).round() as usize).max(1)
}

pub fn model_spec(input_dim: usize, pi_dim: usize, task: Task, het: bool, seed: u64, opts: &TrainOptions) -> TramSpec {
    let base = TramSpec::synthetic(input_dim, pi_dim, task, derive_seed(seed, INIT_STREAM));
    TramSpec {
        phi_widths: base.phi_widths.iter().map(|&w| scaled(w, opts.width_factor)).collect(),
        psi_width: scaled(base.psi_width, opts.width_factor),
        wiring: opts.wiring,
        het,
        ..base
    }
}

pub fn task_of(data: &Dataset) -> Task {
    match data.label_kind {
        tramlab_core::synth::LabelKind::Real => Task::Regression,
        tramlab_core::synth::LabelKind::Class { classes } => Task::Classification { classes },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// One-step TRAM with the PI path.
    Pi,
    /// End-to-end training without PI.
    NoPi,
}

impl Representation {
    pub fn probe_name(self) -> &'static str {
        match self {
            Representation::Pi => "probe_pi",
            Representation::NoPi => "probe_no_pi",
        }
    }
}

pub fn train_at(
    repr: Representation,
    data: &Dataset,
    opts: &TrainOptions,
    seed: u64,
    lr: f64,
    het: bool,
) -> Result<TramModel> {
    let pi_dim = match repr {
        Representation::Pi => data.a_dim(),
        Representation::NoPi => 0,
    };
    let mut model = build_tram(model_spec(data.x_dim(), pi_dim, task_of(data), het, seed, opts))?;
    let td = TrainData::from_dataset(data)?;
    let cfg = opts.train_config(&model, seed, lr);
    match repr {
        Representation::Pi => train_one_step(&mut model, &td, &cfg)?,
        Representation::NoPi => train_no_pi(&mut model, &td, &cfg)?,
    };
    Ok(model)
}

/// Probe fit on `train`, then scored on `validation`: mean squared error for
/// regression, mean negative log-likelihood for classification.
pub fn probe_validation_loss(model: &TramModel, train: &Dataset, validation: &Dataset) -> Result<f64> {
    let probe = linear_probe(model, train, PROBE_L2)?;
    let features = model.phi_features(&validation.x_matrix())?;
    Ok(match &probe {
        Probe::Ridge(_) => {
            let pred = probe.predict_point(&features);
            let y = validation.y_column();
            pred.iter().zip(y.iter()).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / pred.len() as f64
        }
        Probe::Logistic(p) => {
            let proba = p.predict_proba(&features);
            let labels = validation.y_classes()?;
            labels.iter().enumerate().map(|(i, &y)| -proba[(i, y)].max(PROB_FLOOR).ln()).sum::<f64>()
                / labels.len() as f64
        }
    })
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: TramModel,
    pub lr: f64,
    pub validation_loss: f64,
}

/// Train once per learning rate and keep the model whose probe has the
/// lowest validation loss. Runs that diverge are skipped; the first rate
/// wins ties.
pub fn train_selected(
    repr: Representation,
    train: &Dataset,
    validation: &Dataset,
    opts: &TrainOptions,
    seed: u64,
) -> Result<Trained> {
    let mut best: Option<Trained> = None;
    let mut last_err = None;
    for &lr in &opts.lr_grid {
        let model = match train_at(repr, train, opts, seed, lr, false) {
            Ok(m) => m,
            Err(e @ (Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_))) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let loss = probe_validation_loss(&model, train, validation)?;
        if !loss.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| loss < b.validation_loss) {
            best = Some(Trained { model, lr, validation_loss: loss });
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Config("every learning rate diverged".into())))
}

/// Midpoints of `n` equal cells on `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 1, |i, _| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
}

pub fn rmse(pred: &[f64], reference: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    (sse / pred.len() as f64).sqrt()
}

/// RMSE between the probe's grid predictions and the reference values.
pub fn probe_rmse(
    model: &TramModel,
    train: &Dataset,
    grid: &DMatrix<f64>,
    reference: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let probe = linear_probe(model, train, PROBE_L2)?;
    let pred = probe.predict_point(&model.phi_features(grid)?);
    Ok((rmse(&pred, reference), pred))
}

/// Fraction of grid points where the probe's class equals the oracle's.
pub fn probe_oracle_match(
    model: &TramModel,
    train: &Dataset,
    grid: &DMatrix<f64>,
    oracle: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let Probe::Logistic(p) = linear_probe(model, train, PROBE_L2)? else {
        return Err(Error::ModelMismatch("oracle match needs a classification probe".into()));
    };
    let features = model.phi_features(grid)?;
    let classes = p.predict_class(&features);
    let hits = classes.iter().zip(oracle).filter(|(a, b)| a == b).count();
    let proba = p.predict_proba(&features);
    let prob_one = (0..grid.nrows()).map(|i| proba[(i, 1.min(proba.ncols() - 1))]).collect();
    Ok((hits as f64 / oracle.len() as f64, prob_one))
}
