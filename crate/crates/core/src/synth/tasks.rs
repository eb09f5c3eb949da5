//! Noisy-annotator regression and classification tasks.

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::dataset::{Dataset, Label, LabelKind, Latent, PiTriplet};
use crate::error::{Error, Result};
use crate::kv::KvConfig;
use crate::rng::{stream_rng, uniform, BoxMuller};

const STREAM_REGRESSION: u64 = 0x5e01;
const STREAM_CLASSIFICATION: u64 = 0x5e02;
const STREAM_HET: u64 = 0x5e03;
const QUADRATURE_NODES: usize = 64;

/// `y = (1 - a) sin(2 pi x) + a v + eps` with `a ~ Bernoulli(p_noise)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTaskSpec {
    pub n: usize,
    pub p_noise: f64,
    pub eps_std: f64,
    pub x_domain: (f64, f64),
    pub v_range: (f64, f64),
}

impl Default for RegressionTaskSpec {
    fn default() -> Self {
        Self { n: 2500, p_noise: 0.3, eps_std: 0.1, x_domain: (0.0, 1.0), v_range: (-1.0, 1.0) }
    }
}

/// The same signal squashed through a sigmoid and thresholded.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationTaskSpec {
    pub n: usize,
    pub p_noise: f64,
    pub eps_std: f64,
    pub x_domain: (f64, f64),
    pub v_range: (f64, f64),
    pub threshold: f64,
}

impl Default for ClassificationTaskSpec {
    fn default() -> Self {
        Self { n: 20_000, p_noise: 0.3, eps_std: 0.4, x_domain: (-2.0, 2.0), v_range: (-1.0, 1.0), threshold: 0.5 }
    }
}

fn check_common(p_noise: f64, eps_std: f64, x: (f64, f64), v: (f64, f64)) -> Result<()> {
    if !(0.0..=1.0).contains(&p_noise) {
        return Err(Error::Config(format!("p_noise must lie in [0, 1], got {p_noise}")));
    }
    if !(eps_std >= 0.0) || !eps_std.is_finite() {
        return Err(Error::Config(format!("eps_std must be nonnegative, got {eps_std}")));
    }
    if !(x.0 < x.1) || !(v.0 <= v.1) {
        return Err(Error::Config("domain intervals must be ordered".into()));
    }
    Ok(())
}

impl RegressionTaskSpec {
    pub fn validate(&self) -> Result<()> {
        check_common(self.p_noise, self.eps_std, self.x_domain, self.v_range)
    }

    /// Reads `n`, `p_noise`, `eps_std` from `cfg`, falling back to defaults.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let spec = Self {
            n: cfg.parse_or("n", d.n)?,
            p_noise: cfg.parse_or("p_noise", d.p_noise)?,
            eps_std: cfg.parse_or("eps_std", d.eps_std)?,
            ..d
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ClassificationTaskSpec {
    pub fn validate(&self) -> Result<()> {
        check_common(self.p_noise, self.eps_std, self.x_domain, self.v_range)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }

    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let spec = Self {
            n: cfg.parse_or("n", d.n)?,
            p_noise: cfg.parse_or("p_noise", d.p_noise)?,
            eps_std: cfg.parse_or("eps_std", d.eps_std)?,
            threshold: cfg.parse_or("threshold", d.threshold)?,
            ..d
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn clean_signal(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

struct Draw {
    x: f64,
    noisy: bool,
    v: f64,
    eps: f64,
}

fn draw<R: Rng>(rng: &mut R, g: &mut BoxMuller, p: f64, eps_std: f64, xd: (f64, f64), vr: (f64, f64)) -> Draw {
    let x = uniform(rng, xd.0, xd.1);
    let noisy = rng.random::<f64>() < p;
    let v = uniform(rng, vr.0, vr.1);
    let eps = eps_std * g.sample(rng);
    Draw { x, noisy, v, eps }
}

fn argument(d: &Draw) -> f64 {
    if d.noisy {
        d.v + d.eps
    } else {
        clean_signal(d.x) + d.eps
    }
}

fn record(d: &Draw, y: Label) -> PiTriplet {
    let a = if d.noisy { 1.0 } else { 0.0 };
    PiTriplet { x: vec![d.x], a_raw: vec![a], a_encoded: vec![a], y, latent: Latent { is_noisy: d.noisy, v: d.v } }
}

pub fn gen_regression(spec: &RegressionTaskSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream_rng(seed, STREAM_REGRESSION);
    let mut g = BoxMuller::new();
    let records = (0..spec.n)
        .map(|_| {
            let d = draw(&mut rng, &mut g, spec.p_noise, spec.eps_std, spec.x_domain, spec.v_range);
            record(&d, Label::Real(argument(&d)))
        })
        .collect();
    Ok(Dataset { a_raw_names: vec!["annotator_noisy".into()], label_kind: LabelKind::Real, records })
}

/// `E[y | x] = (1 - p) sin(2 pi x) + p E[v]`.
pub fn true_marginal_regression(spec: &RegressionTaskSpec, x: f64) -> f64 {
    let mean_v = 0.5 * (spec.v_range.0 + spec.v_range.1);
    (1.0 - spec.p_noise) * clean_signal(x) + spec.p_noise * mean_v
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn gen_classification(spec: &ClassificationTaskSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let cut = logit(spec.threshold);
    let mut rng = stream_rng(seed, STREAM_CLASSIFICATION);
    let mut g = BoxMuller::new();
    let records = (0..spec.n)
        .map(|_| {
            let d = draw(&mut rng, &mut g, spec.p_noise, spec.eps_std, spec.x_domain, spec.v_range);
            // sigmoid(z) > t  <=>  z > logit(t)
            let label = usize::from(argument(&d) > cut);
            record(&d, Label::Class(label))
        })
        .collect();
    Ok(Dataset { a_raw_names: vec!["annotator_noisy".into()], label_kind: LabelKind::Class { classes: 2 }, records })
}

/// `P(label = 1 | x)` with `a`, `v` and `eps` integrated out.
#[derive(Clone, Debug)]
pub struct ClassificationOracle {
    spec: ClassificationTaskSpec,
    noisy_prob: f64,
}

impl ClassificationOracle {
    pub fn new(spec: &ClassificationTaskSpec) -> Result<Self> {
        spec.validate()?;
        let cut = logit(spec.threshold);
        let (lo, hi) = spec.v_range;
        let exceed = |z: f64| exceed_prob(z - cut, spec.eps_std);
        let noisy_prob = if hi > lo {
            let rule =
                GaussLegendre::new(QUADRATURE_NODES).map_err(|e| Error::Config(format!("quadrature rule: {e:?}")))?;
            rule.integrate(lo, hi, exceed) / (hi - lo)
        } else {
            exceed(lo)
        };
        Ok(Self { spec: spec.clone(), noisy_prob })
    }

    pub fn prob_one(&self, x: f64) -> f64 {
        let cut = logit(self.spec.threshold);
        let clean = exceed_prob(clean_signal(x) - cut, self.spec.eps_std);
        (1.0 - self.spec.p_noise) * clean + self.spec.p_noise * self.noisy_prob
    }

    pub fn class(&self, x: f64) -> usize {
        usize::from(self.prob_one(x) > 0.5)
    }
}

/// `P(z + eps > 0)` for `eps ~ N(0, s^2)`.
fn exceed_prob(z: f64, s: f64) -> f64 {
    if s == 0.0 {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    Normal::standard().cdf(z / s)
}

pub fn oracle_classifier(spec: &ClassificationTaskSpec, x: f64) -> Result<usize> {
    Ok(ClassificationOracle::new(spec)?.class(x))
}

/// Mixture whose conditionals are homoscedastic but whose marginal is not:
/// `y = sin(2 pi x) + shift a + eps`, `a ~ Bernoulli(x)` on `x ~ U[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HetMixtureSpec {
    pub n: usize,
    pub shift: f64,
    pub eps_std: f64,
}

impl Default for HetMixtureSpec {
    fn default() -> Self {
        Self { n: 2500, shift: 1.5, eps_std: 0.1 }
    }
}

pub fn gen_het_mixture(spec: &HetMixtureSpec, seed: u64) -> Result<Dataset> {
    if !(spec.eps_std > 0.0) {
        return Err(Error::Config("eps_std must be positive".into()));
    }
    let mut rng = stream_rng(seed, STREAM_HET);
    let mut g = BoxMuller::new();
    let records = (0..spec.n)
        .map(|_| {
            let x: f64 = rng.random();
            let noisy = rng.random::<f64>() < x;
            let a = if noisy { 1.0 } else { 0.0 };
            let y = clean_signal(x) + spec.shift * a + spec.eps_std * g.sample(&mut rng);
            PiTriplet {
                x: vec![x],
                a_raw: vec![a],
                a_encoded: vec![a],
                y: Label::Real(y),
                latent: Latent { is_noisy: noisy, v: 0.0 },
            }
        })
        .collect();
    Ok(Dataset { a_raw_names: vec!["shifted".into()], label_kind: LabelKind::Real, records })
}

/// Marginal mean and variance of [`gen_het_mixture`] at `x`.
pub fn het_mixture_moments(spec: &HetMixtureSpec, x: f64) -> (f64, f64) {
    let p = x.clamp(0.0, 1.0);
    let mean = clean_signal(x) + spec.shift * p;
    let var = spec.eps_std * spec.eps_std + spec.shift * spec.shift * p * (1.0 - p);
    (mean, var)
}
