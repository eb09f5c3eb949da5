//! One-step, two-step, no-PI and distillation training loops.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::het::{het_ce_loss_and_grad, logit_noise, HET_MC_SAMPLES};
use super::model::{hcat, Task, TramModel};
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, stop_gradient, AdamConfig, AdamState, LossKind, ParamBlock, StopGradient, Targets};
use crate::rng::{derive_seed, stream_rng};
use crate::synth::{Dataset, LabelKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    OneStep,
    TwoStep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss_l1: LossKind,
    pub loss_l2: LossKind,
}

impl TrainConfig {
    /// MSE for regression (Gaussian NLL on the marginal head of a
    /// heteroscedastic model), cross-entropy for classification.
    pub fn for_model(model: &TramModel, seed: u64) -> Self {
        let (l1, l2) = match model.task() {
            Task::Regression if model.het_w.is_some() => (LossKind::Mse, LossKind::GaussianNll),
            Task::Regression => (LossKind::Mse, LossKind::Mse),
            Task::Classification { .. } => (LossKind::SoftmaxCe, LossKind::SoftmaxCe),
        };
        Self {
            mode: TrainMode::OneStep,
            beta: 1.0,
            epochs: 10,
            batch_size: 128,
            lr: 1e-3,
            seed,
            loss_l1: l1,
            loss_l2: l2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TargetData {
    Values(DMatrix<f64>),
    Classes(Vec<usize>),
}

impl TargetData {
    fn select(&self, idx: &[usize]) -> TargetData {
        match self {
            TargetData::Values(y) => TargetData::Values(y.select_rows(idx)),
            TargetData::Classes(c) => TargetData::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }

    fn as_targets(&self) -> Targets<'_> {
        match self {
            TargetData::Values(y) => Targets::Values(y),
            TargetData::Classes(c) => Targets::Classes(c),
        }
    }
}

/// Dense copies of a dataset's inputs, encoded PI and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub x: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub targets: TargetData,
}

impl TrainData {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("no training records".into()));
        }
        let targets = match data.label_kind {
            LabelKind::Real => TargetData::Values(data.y_column()),
            LabelKind::Class { .. } => TargetData::Classes(data.y_classes()?),
        };
        Ok(Self { x: data.x_matrix(), a: data.a_matrix(), targets })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> TrainData {
        TrainData { x: self.x.select_rows(idx), a: self.a.select_rows(idx), targets: self.targets.select(idx) }
    }
}

/// Per-epoch mean losses and, for stop-gradient training, the norm of the
/// φ gradient reaching back from the marginal branch at every step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurves {
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub l2_phi_grad_norm: Vec<f64>,
}

/// Uniform shuffle of `0..n`, reseeded from the run seed for every epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 0x5c00_0000 + epoch as u64));
    idx
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Route {
    StopGradient,
    EndToEnd,
}

#[derive(Clone, Copy)]
enum Teacher<'t> {
    None,
    Conditional(&'t TramModel),
    Marginal(&'t TramModel),
}

impl Teacher<'_> {
    fn logits(&self, batch: &TrainData) -> Result<Option<DMatrix<f64>>> {
        Ok(match self {
            Teacher::None => None,
            Teacher::Conditional(t) => Some(t.conditional_raw(&batch.x, &batch.a)?),
            Teacher::Marginal(t) => Some(t.marginal_raw(&batch.x)?),
        })
    }
}

struct Plan<'t> {
    l1: Option<(LossKind, Teacher<'t>)>,
    l2: Option<(LossKind, Route, Teacher<'t>)>,
    schedule_seed: u64,
}

struct Optimizers {
    phi: AdamState,
    psi: Option<AdamState>,
    psi2: Option<AdamState>,
    head_u: Option<AdamState>,
    head_w: AdamState,
    het_w: Option<AdamState>,
}

impl Optimizers {
    fn new(model: &TramModel, lr: f64) -> Self {
        let cfg = AdamConfig::with_lr(lr);
        let new = |p: &ParamBlock| AdamState::new(p, cfg);
        Self {
            phi: new(model.phi.params()),
            psi: model.psi.as_ref().map(|p| new(p.first.params())),
            psi2: model.psi.as_ref().and_then(|p| p.second.as_ref()).map(|s| new(s.params())),
            head_u: model.head_u.as_ref().map(|u| new(u.params())),
            head_w: new(model.head_w.params()),
            het_w: model.het_w.as_ref().map(|h| new(h.params())),
        }
    }
}

#[derive(Default)]
struct StepGrads {
    phi: Option<ParamBlock>,
    psi: Option<ParamBlock>,
    psi2: Option<ParamBlock>,
    head_u: Option<ParamBlock>,
    head_w: Option<ParamBlock>,
    het_w: Option<ParamBlock>,
}

fn check_loss(kind: LossKind, task: Task, het: bool, teacher: bool, branch: &str) -> Result<()> {
    let ok = match (task, kind) {
        (Task::Regression, LossKind::Mse) => !het || branch == "L1",
        (Task::Regression, LossKind::GaussianNll) => het && branch == "L2",
        (Task::Classification { .. }, LossKind::SoftmaxCe) => !teacher,
        (Task::Classification { .. }, LossKind::Distill { .. }) => teacher && !het,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{branch} loss {kind} does not fit this model")))
    }
}

/// Conditional branch: loss, gradients for ψ and u, gradient with respect to φ(x).
fn l1_branch(
    model: &TramModel,
    kind: LossKind,
    phi_out: &DMatrix<f64>,
    batch: &TrainData,
    teacher: Option<&DMatrix<f64>>,
    beta: f64,
    grads: &mut StepGrads,
) -> Result<(f64, DMatrix<f64>)> {
    let (psi, head_u) = model.pi_path()?;
    let (h, psi_cache) = psi.forward(phi_out, &batch.a)?;
    let (out, u_cache) = head_u.forward(&h)?;
    let (loss, dout) = loss_and_grad(kind, &out, &batch.targets.as_targets(), teacher)?;
    let dout = dout * beta;
    let (gu, dh) = head_u.backward(&u_cache, &dout)?;
    let (g1, g2, dphi) = psi.backward(&psi_cache, &dh)?;
    grads.head_u = Some(gu);
    grads.psi = Some(g1);
    grads.psi2 = g2;
    Ok((loss, dphi))
}

/// Marginal branch on the given features: loss, head gradients and the
/// gradient with respect to the features.
fn l2_branch(
    model: &TramModel,
    kind: LossKind,
    feats: &DMatrix<f64>,
    batch: &TrainData,
    teacher: Option<&DMatrix<f64>>,
    noise_seed: u64,
    grads: &mut StepGrads,
) -> Result<(f64, DMatrix<f64>)> {
    let (out, w_cache) = model.head_w.forward(feats)?;
    let targets = batch.targets.as_targets();
    let Some(het) = &model.het_w else {
        let (loss, dout) = loss_and_grad(kind, &out, &targets, teacher)?;
        let (gw, dfeat) = model.head_w.backward(&w_cache, &dout)?;
        grads.head_w = Some(gw);
        return Ok((loss, dfeat));
    };
    let (raw, het_cache) = het.forward(feats)?;
    let (loss, dout, draw) = match &batch.targets {
        TargetData::Values(_) => {
            let (loss, d) = loss_and_grad(kind, &hcat(&out, &raw), &targets, None)?;
            (loss, d.columns(0, 1).into_owned(), d.columns(1, 1).into_owned())
        }
        TargetData::Classes(labels) => {
            let noise = logit_noise(out.nrows(), out.ncols(), HET_MC_SAMPLES, noise_seed);
            het_ce_loss_and_grad(&out, &raw, labels, &noise)?
        }
    };
    let (gw, dfeat_w) = model.head_w.backward(&w_cache, &dout)?;
    let (gh, dfeat_h) = het.backward(&het_cache, &draw)?;
    grads.head_w = Some(gw);
    grads.het_w = Some(gh);
    Ok((loss, dfeat_w + dfeat_h))
}

fn step(opt: &mut Option<AdamState>, params: Option<&mut ParamBlock>, grads: Option<ParamBlock>) -> Result<()> {
    if let (Some(o), Some(p), Some(g)) = (opt.as_mut(), params, grads) {
        o.step(p, &g)?;
    }
    Ok(())
}

fn apply(model: &mut TramModel, opt: &mut Optimizers, g: StepGrads) -> Result<()> {
    if let Some(gp) = g.phi {
        opt.phi.step(model.phi.params_mut(), &gp)?;
    }
    if let Some(psi) = model.psi.as_mut() {
        step(&mut opt.psi, Some(psi.first.params_mut()), g.psi)?;
        step(&mut opt.psi2, psi.second.as_mut().map(|s| s.params_mut()), g.psi2)?;
    }
    step(&mut opt.head_u, model.head_u.as_mut().map(|u| u.params_mut()), g.head_u)?;
    if let Some(gw) = g.head_w {
        opt.head_w.step(model.head_w.params_mut(), &gw)?;
    }
    step(&mut opt.het_w, model.het_w.as_mut().map(|h| h.params_mut()), g.het_w)?;
    Ok(())
}

fn run(model: &mut TramModel, data: &TrainData, cfg: &TrainConfig, plan: Plan<'_>) -> Result<LossCurves> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("no training records".into()));
    }
    if data.x.ncols() != model.spec.input_dim {
        return Err(Error::Shape(format!("x has {} columns, model expects {}", data.x.ncols(), model.spec.input_dim)));
    }
    let task = model.task();
    let het = model.het_w.is_some();
    if let Some((kind, teacher)) = plan.l1 {
        model.pi_path()?;
        check_loss(kind, task, het, !matches!(teacher, Teacher::None), "L1")?;
    }
    if let Some((kind, _, teacher)) = plan.l2 {
        check_loss(kind, task, het, !matches!(teacher, Teacher::None), "L2")?;
    }
    let mut opt = Optimizers::new(model, cfg.lr);
    let mut curves = LossCurves::default();
    let mut global_step = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), plan.schedule_seed, epoch);
        let (mut sum1, mut sum2, mut batches) = (0.0, 0.0, 0usize);
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.select(idx);
            let (phi_out, phi_cache) = model.phi.forward(&batch.x)?;
            let mut grads = StepGrads::default();
            if let Some((kind, teacher)) = plan.l1 {
                let t = teacher.logits(&batch)?;
                let (loss, dphi) = l1_branch(model, kind, &phi_out, &batch, t.as_ref(), cfg.beta, &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: bi });
                }
                sum1 += loss;
                grads.phi = Some(model.phi.backward(&phi_cache, &dphi)?.0);
            }
            if let Some((kind, route, teacher)) = plan.l2 {
                let t = teacher.logits(&batch)?;
                let feats = match route {
                    Route::StopGradient => stop_gradient(&phi_out),
                    Route::EndToEnd => phi_out.clone(),
                };
                let noise_seed = derive_seed(cfg.seed, 0x4e00_0000 + global_step);
                let (loss, dfeat) = l2_branch(model, kind, &feats, &batch, t.as_ref(), noise_seed, &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: bi });
                }
                sum2 += loss;
                // φ moves only if the conditional branch or an end-to-end marginal branch drives it
                if plan.l1.is_some() || route == Route::EndToEnd {
                    let dphi = match route {
                        Route::StopGradient => StopGradient.backward(&dfeat),
                        Route::EndToEnd => dfeat,
                    };
                    let (g, _) = model.phi.backward(&phi_cache, &dphi)?;
                    if route == Route::StopGradient {
                        curves.l2_phi_grad_norm.push(g.norm());
                    }
                    match grads.phi.as_mut() {
                        Some(acc) => acc.add_assign(&g)?,
                        None => grads.phi = Some(g),
                    }
                }
            }
            apply(model, &mut opt, grads)?;
            batches += 1;
            global_step += 1;
        }
        if plan.l1.is_some() {
            curves.l1.push(sum1 / batches as f64);
        }
        if plan.l2.is_some() {
            curves.l2.push(sum2 / batches as f64);
        }
    }
    Ok(curves)
}

/// Minimizes `L2(y, q(y|sg(φ(x)))) + β L1(y, q(y|x, a))` jointly, or runs
/// the two-step procedure when `cfg.mode` says so.
pub fn train_one_step(model: &mut TramModel, data: &TrainData, cfg: &TrainConfig) -> Result<LossCurves> {
    if cfg.mode == TrainMode::TwoStep {
        return train_two_step(model, data, cfg);
    }
    let plan = Plan {
        l1: Some((cfg.loss_l1, Teacher::None)),
        l2: Some((cfg.loss_l2, Route::StopGradient, Teacher::None)),
        schedule_seed: cfg.seed,
    };
    run(model, data, cfg, plan)
}

/// The conditional branch alone; the marginal head is untouched.
pub fn train_l1_only(model: &mut TramModel, data: &TrainData, cfg: &TrainConfig) -> Result<LossCurves> {
    let plan = Plan { l1: Some((cfg.loss_l1, Teacher::None)), l2: None, schedule_seed: cfg.seed };
    run(model, data, cfg, plan)
}

/// Step 1 fits (φ, ψ, u) on L1; step 2 fits the marginal head on the frozen φ.
pub fn train_two_step(model: &mut TramModel, data: &TrainData, cfg: &TrainConfig) -> Result<LossCurves> {
    let mut curves = train_l1_only(model, data, cfg)?;
    let plan = Plan {
        l1: None,
        l2: Some((cfg.loss_l2, Route::StopGradient, Teacher::None)),
        schedule_seed: derive_seed(cfg.seed, 2),
    };
    let second = run(model, data, cfg, plan)?;
    curves.l2 = second.l2;
    Ok(curves)
}

/// φ and the marginal head trained end to end on L2, without PI.
pub fn train_no_pi(model: &mut TramModel, data: &TrainData, cfg: &TrainConfig) -> Result<LossCurves> {
    let plan = Plan { l1: None, l2: Some((cfg.loss_l2, Route::EndToEnd, Teacher::None)), schedule_seed: cfg.seed };
    run(model, data, cfg, plan)
}

fn check_teacher(teacher: &TramModel, student: &TramModel) -> Result<()> {
    match (teacher.task(), student.task()) {
        (Task::Classification { classes: a }, Task::Classification { classes: b }) if a == b => Ok(()),
        (t, s) => Err(Error::ModelMismatch(format!("teacher task {t:?} does not match student task {s:?}"))),
    }
}

/// One-step TRAM whose conditional head distills the teacher's conditional
/// logits at (x, a).
pub fn train_distilled(
    teacher: &TramModel,
    student: &mut TramModel,
    data: &TrainData,
    cfg: &TrainConfig,
    temperature: f64,
    lambda: f64,
) -> Result<LossCurves> {
    check_teacher(teacher, student)?;
    teacher.pi_path()?;
    let plan = Plan {
        l1: Some((LossKind::distill(temperature, lambda)?, Teacher::Conditional(teacher))),
        l2: Some((cfg.loss_l2, Route::StopGradient, Teacher::None)),
        schedule_seed: cfg.seed,
    };
    run(student, data, cfg, plan)
}

/// A PI-free student distilling a PI-free teacher's marginal logits.
pub fn train_distill_no_pi(
    teacher: &TramModel,
    student: &mut TramModel,
    data: &TrainData,
    cfg: &TrainConfig,
    temperature: f64,
    lambda: f64,
) -> Result<LossCurves> {
    check_teacher(teacher, student)?;
    let plan = Plan {
        l1: None,
        l2: Some((LossKind::distill(temperature, lambda)?, Route::EndToEnd, Teacher::Marginal(teacher))),
        schedule_seed: cfg.seed,
    };
    run(student, data, cfg, plan)
}
