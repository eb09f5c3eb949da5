//! Closed-form and Monte-Carlo excess risks, the PI-vs-no-PI comparisons and
//! the rank-one norm bound.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::estimators::{fit_for_kind, hstack, predict, EstimatorKind, LeastSquares, PredictContext, TrainingDraw};
use super::generator::{sample_noise, FixedDesign, LinearGenerator, PiSampler};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const DEFAULT_N_INNER: usize = 2000;
pub const MIN_MC_REPS: usize = 100;
const INNER_CHUNK: usize = 50;

/// Closed-form value together with its Monte-Carlo counterpart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskEstimate {
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub n_reps: usize,
}

impl RiskEstimate {
    pub const CSV_HEADER: &'static str = "kind,closed_form,mc_mean,mc_stderr,n_reps,seed";

    pub fn csv_row(&self, kind: EstimatorKind, seed: u64) -> String {
        format!("{kind},{:?},{:?},{:?},{},{seed}", self.closed_form, self.mc_mean, self.mc_stderr, self.n_reps)
    }

    /// `|closed_form - mc_mean| <= k * mc_stderr`.
    pub fn agrees_within(&self, k: f64) -> bool {
        (self.closed_form - self.mc_mean).abs() <= k * self.mc_stderr
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One design and generator, with the A-expectations shared between the
/// closed forms and the Monte-Carlo runs.
pub struct RiskLab<'a> {
    design: &'a FixedDesign,
    gen: &'a LinearGenerator,
    inner_seed: u64,
    n_inner: usize,
    sampler: PiSampler,
    k_norm: OnceLock<f64>,
    mean_l: OnceLock<DMatrix<f64>>,
}

impl<'a> RiskLab<'a> {
    pub fn new(design: &'a FixedDesign, gen: &'a LinearGenerator, inner_seed: u64, n_inner: usize) -> Result<Self> {
        design.check_generator(gen)?;
        if n_inner == 0 {
            return Err(Error::Config("n_inner must be positive".into()));
        }
        let sampler = PiSampler::new(design.x(), gen)?;
        Ok(Self { design, gen, inner_seed, n_inner, sampler, k_norm: OnceLock::new(), mean_l: OnceLock::new() })
    }

    pub fn mu(&self) -> &DMatrix<f64> {
        self.sampler.mu()
    }

    fn n(&self) -> f64 {
        self.design.n() as f64
    }

    fn draw_inner(&self, j: usize) -> Result<DMatrix<f64>> {
        self.sampler.sample(derive_seed(self.inner_seed, j as u64))
    }

    /// Monte-Carlo estimate of `E ||K||_F^2` over training draws of `A`.
    pub fn expected_k_norm_sq(&self) -> Result<f64> {
        if let Some(v) = self.k_norm.get() {
            return Ok(*v);
        }
        let x = self.design.x();
        let m_mat = hstack(x, self.mu())?;
        let norms: Vec<f64> = (0..self.n_inner)
            .into_par_iter()
            .map(|j| {
                let a = self.draw_inner(j)?;
                LeastSquares::new(&hstack(x, &a)?)?.operator_norm_sq(&m_mat)
            })
            .collect::<Result<_>>()?;
        let v = norms.iter().sum::<f64>() / self.n_inner as f64;
        Ok(*self.k_norm.get_or_init(|| v))
    }

    /// Monte-Carlo estimate of `E[L]`, the mean joint projector.
    pub fn expected_l(&self) -> Result<&DMatrix<f64>> {
        if let Some(l) = self.mean_l.get() {
            return Ok(l);
        }
        let x = self.design.x();
        let n = self.design.n();
        let chunks: Vec<DMatrix<f64>> = (0..self.n_inner.div_ceil(INNER_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = DMatrix::zeros(n, n);
                for j in c * INNER_CHUNK..((c + 1) * INNER_CHUNK).min(self.n_inner) {
                    let a = self.draw_inner(j)?;
                    acc += LeastSquares::new(&hstack(x, &a)?)?.projector();
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut total = DMatrix::zeros(n, n);
        for c in chunks {
            total += c;
        }
        total /= self.n_inner as f64;
        Ok(self.mean_l.get_or_init(|| total))
    }

    /// `||(I - Pi_x) mu(X) v*||^2`, `tr(Pi_x Lambda)`.
    fn no_pi_terms(&self) -> Result<(f64, f64)> {
        let x = self.design.x();
        let pi = LeastSquares::new(x)?.projector();
        let mv = self.mu() * &self.gen.v_star;
        let outside = (&mv - &pi * &mv).norm_squared();
        let lambda = self.gen.lambda_diag(x);
        let trace = (0..self.design.n()).map(|i| pi[(i, i)] * lambda[i]).sum();
        Ok((outside, trace))
    }

    /// Excess risk with the shared variance term left out.
    pub fn closed_form(&self, kind: EstimatorKind) -> Result<f64> {
        let n = self.n();
        let s2 = self.gen.sigma * self.gen.sigma;
        let d = self.design.d() as f64;
        match kind {
            EstimatorKind::NoPI => {
                let (outside, trace) = self.no_pi_terms()?;
                Ok(outside / n + s2 * d / n + trace / n)
            }
            EstimatorKind::MargNoPI => {
                let (outside, _) = self.no_pi_terms()?;
                Ok(outside / n + s2 * d / n)
            }
            EstimatorKind::PIMeanImpute => Ok(s2 / n * self.expected_k_norm_sq()?),
            EstimatorKind::MargPI => Ok(s2 / n * self.expected_l()?.norm_squared()),
        }
    }

    /// Per-replicate risk `(1/n) ||X w* + mu(X) v* - tau(X)||^2`.
    fn replicate_risk(&self, kind: EstimatorKind, rep_seed: u64) -> Result<f64> {
        let x = self.design.x();
        let eps = sample_noise(self.design.n(), self.gen.sigma, rep_seed);
        let target = x * &self.gen.w_star + self.mu() * &self.gen.v_star;
        let resid = if kind == EstimatorKind::MargPI {
            // E_a[X w1 + A v1] = X w* + mu(X) v* + E[L] eps
            -(self.expected_l()? * &eps)
        } else {
            let a = if kind == EstimatorKind::MargNoPI { self.mu().clone() } else { self.sampler.sample(rep_seed)? };
            let draw =
                TrainingDraw { x, a: &a, mu: self.mu(), eps: &eps, w_star: &self.gen.w_star, v_star: &self.gen.v_star };
            let params = fit_for_kind(kind, &draw)?;
            let tau = predict(kind, &params, x, &PredictContext { mu: Some(self.mu()) })?;
            target - tau
        };
        Ok(resid.norm_squared() / self.n())
    }

    /// Per-replicate risks in replicate order.
    pub fn mc_values(&self, kind: EstimatorKind, n_reps: usize, seed: u64) -> Result<Vec<f64>> {
        if kind == EstimatorKind::MargPI {
            self.expected_l()?;
        }
        (0..n_reps)
            .into_par_iter()
            .map(|r| {
                self.replicate_risk(kind, derive_seed(seed, r as u64))
                    .map_err(|e| Error::Replicate { index: r, source: Box::new(e) })
            })
            .collect()
    }

    pub fn mc(&self, kind: EstimatorKind, n_reps: usize, seed: u64) -> Result<(f64, f64)> {
        if n_reps < MIN_MC_REPS {
            return Err(Error::Config(format!("n_reps must be at least {MIN_MC_REPS}, got {n_reps}")));
        }
        Ok(mean_stderr(&self.mc_values(kind, n_reps, seed)?))
    }

    pub fn estimate(&self, kind: EstimatorKind, n_reps: usize, seed: u64) -> Result<RiskEstimate> {
        let closed_form = self.closed_form(kind)?;
        let (mc_mean, mc_stderr) = self.mc(kind, n_reps, seed)?;
        Ok(RiskEstimate { closed_form, mc_mean, mc_stderr, n_reps })
    }
}

/// Closed-form excess risk; inner expectations use `n_inner` draws from `inner_seed`.
pub fn risk_closed_form(
    kind: EstimatorKind,
    design: &FixedDesign,
    gen: &LinearGenerator,
    inner_seed: u64,
    n_inner: usize,
) -> Result<f64> {
    RiskLab::new(design, gen, inner_seed, n_inner)?.closed_form(kind)
}

/// Stream used for the inner expectations when only a run seed is given.
pub fn inner_seed_for(seed: u64) -> u64 {
    derive_seed(seed, 0x1_0000)
}

/// Monte-Carlo risk with the closed form evaluated alongside.
pub fn risk_mc(
    kind: EstimatorKind,
    design: &FixedDesign,
    gen: &LinearGenerator,
    n_reps: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    RiskLab::new(design, gen, inner_seed_for(seed), DEFAULT_N_INNER)?.estimate(kind, n_reps, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proposition {
    /// Plain predictions: no-PI least squares vs. joint fit with mean imputation.
    Plain,
    /// Predictions marginalized over the privileged features.
    Marginalized,
}

impl Proposition {
    pub fn from_index(which: u8) -> Result<Self> {
        match which {
            1 => Ok(Proposition::Plain),
            2 => Ok(Proposition::Marginalized),
            other => Err(Error::Config(format!("proposition must be 1 or 2, got {other}"))),
        }
    }

    pub fn kinds(self) -> (EstimatorKind, EstimatorKind) {
        match self {
            Proposition::Plain => (EstimatorKind::NoPI, EstimatorKind::PIMeanImpute),
            Proposition::Marginalized => (EstimatorKind::MargNoPI, EstimatorKind::MargPI),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropositionCheck {
    /// No-PI risk.
    pub lhs: f64,
    /// PI risk.
    pub rhs: f64,
    pub pi_wins: bool,
    pub mc_no_pi: RiskEstimate,
    pub mc_pi: RiskEstimate,
    /// False only when the Monte-Carlo ordering is significant at 3 sigma
    /// and contradicts `pi_wins`.
    pub consistent: bool,
}

/// Compare the closed-form risks of the no-PI and PI estimators, and check
/// the verdict against the Monte-Carlo ordering.
pub fn check_proposition(
    which: Proposition,
    design: &FixedDesign,
    gen: &LinearGenerator,
    n_reps: usize,
    seed: u64,
) -> Result<PropositionCheck> {
    let lab = RiskLab::new(design, gen, inner_seed_for(seed), DEFAULT_N_INNER)?;
    check_proposition_with(which, &lab, n_reps, seed)
}

pub fn check_proposition_with(
    which: Proposition,
    lab: &RiskLab<'_>,
    n_reps: usize,
    seed: u64,
) -> Result<PropositionCheck> {
    let (no_pi, pi) = which.kinds();
    // The joint fit must exist on every draw; surface this as an assumption failure.
    let mc_pi = lab.estimate(pi, n_reps, seed).map_err(|e| match e {
        Error::Singular(msg) => Error::Assumption(format!("[X, A] must be almost surely full rank: {msg}")),
        Error::Replicate { index, source } if matches!(*source, Error::Singular(_)) => {
            Error::Assumption(format!("[X, A] is rank deficient in replicate {index}"))
        }
        other => other,
    })?;
    let mc_no_pi = lab.estimate(no_pi, n_reps, seed)?;
    let (lhs, rhs) = (mc_no_pi.closed_form, mc_pi.closed_form);
    let pi_wins = lhs > rhs;
    let diff = mc_no_pi.mc_mean - mc_pi.mc_mean;
    let se = mc_no_pi.mc_stderr.hypot(mc_pi.mc_stderr);
    let consistent = diff.abs() <= 3.0 * se || (diff > 0.0) == pi_wins;
    Ok(PropositionCheck { lhs, rhs, pi_wins, mc_no_pi, mc_pi, consistent })
}

/// Which operator the rank-one bound is evaluated for.
#[derive(Clone, Copy, Debug)]
pub enum BoundVariant<'a> {
    /// `K = X H + mu G`, with `mu(X)` as a single column.
    K { mu: &'a DVector<f64> },
    /// `L = X H + A G`.
    L,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl NormBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12)
    }
}

/// `||K||_F^2 <= 2d + 2(||Pi_x a||^2 + ||mu||^2) / ||(I - Pi_x) a||^2` for a
/// single privileged feature.
pub fn sherman_morrison_bound(x: &DMatrix<f64>, a: &DVector<f64>, variant: BoundVariant<'_>) -> Result<NormBound> {
    let (n, d) = x.shape();
    if a.len() != n {
        return Err(Error::Shape(format!("a has length {}, X has {n} rows", a.len())));
    }
    let mu = match variant {
        BoundVariant::K { mu } => {
            if mu.len() != n {
                return Err(Error::Shape(format!("mu has length {}, X has {n} rows", mu.len())));
            }
            mu
        }
        BoundVariant::L => a,
    };
    let pi = LeastSquares::new(x)?.projector();
    let pa = &pi * a;
    let perp = (a - &pa).norm_squared();
    if perp <= (super::estimators::RANK_TOLERANCE * a.norm()).powi(2) || perp == 0.0 {
        return Err(Error::Singular("a lies in the span of X; the bound divides by zero".into()));
    }
    let rhs = 2.0 * d as f64 + 2.0 * (pa.norm_squared() + mu.norm_squared()) / perp;
    let a_mat = DMatrix::from_column_slice(n, 1, a.as_slice());
    let mu_mat = DMatrix::from_column_slice(n, 1, mu.as_slice());
    let ls = LeastSquares::new(&hstack(x, &a_mat)?)?;
    let lhs = ls.operator_norm_sq(&hstack(x, &mu_mat)?)?;
    Ok(NormBound { lhs, rhs })
}
