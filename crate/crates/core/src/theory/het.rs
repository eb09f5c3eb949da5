//! Best single Gaussian for a uniform mixture of unit-variance annotator
//! Gaussians, found numerically.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ComponentMean = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct GaussianMixtureSpec {
    pub means: Vec<ComponentMean>,
}

impl fmt::Debug for GaussianMixtureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianMixtureSpec").field("m", &self.means.len()).finish()
    }
}

impl GaussianMixtureSpec {
    pub fn new(means: Vec<ComponentMean>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        Ok(Self { means })
    }

    /// Components with constant means.
    pub fn constant(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&c| Arc::new(move |_| c) as ComponentMean).collect())
    }

    pub fn m(&self) -> usize {
        self.means.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HetMomentResult {
    pub mu_star: f64,
    /// `1 + mean(μ_m²) − μ*²`.
    pub sigma2_star: f64,
    pub numeric_mu: f64,
    pub numeric_sigma2: f64,
    /// The closed form as printed, `(M − μ*) + mean(μ_m²)`, kept only for the report.
    pub printed_sigma2: f64,
}

pub const GOLDEN_BRACKET: (f64, f64) = (1e-4, 1e6);
pub const GOLDEN_TOL: f64 = 1e-10;

/// Minimizes a unimodal function on `[lo, hi]`; returns the abscissa.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if hi - lo <= tol.max(f64::EPSILON * hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `E_a[KL(N(μ_a, 1) || N(mu, s))]` with a uniform over components.
pub fn expected_kl_to_gaussian(means: &[f64], mu: f64, s: f64) -> f64 {
    let m = means.len() as f64;
    means.iter().map(|&ma| 0.5 * (s.ln() + (1.0 + (ma - mu).powi(2)) / s - 1.0)).sum::<f64>() / m
}

pub fn het_moment_match(spec: &GaussianMixtureSpec, x: f64) -> Result<HetMomentResult> {
    let means: Vec<f64> = spec.means.iter().map(|f| f(x)).collect();
    if means.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite component mean at x = {x}")));
    }
    let m = means.len() as f64;
    let mu_star = means.iter().sum::<f64>() / m;
    let mean_sq = means.iter().map(|v| v * v).sum::<f64>() / m;
    // the KL is quadratic in mu, so its optimum is the component average
    let numeric_mu = mu_star;
    let (lo, hi) = GOLDEN_BRACKET;
    let numeric_sigma2 = golden_section(|s| expected_kl_to_gaussian(&means, numeric_mu, s), lo, hi, GOLDEN_TOL);
    Ok(HetMomentResult {
        mu_star,
        sigma2_star: 1.0 + mean_sq - mu_star * mu_star,
        numeric_mu,
        numeric_sigma2,
        printed_sigma2: (m - mu_star) + mean_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component() {
        let spec = GaussianMixtureSpec::new(vec![Arc::new(|x: f64| 3.0 * x)]).unwrap();
        let r = het_moment_match(&spec, 0.5).unwrap();
        assert_eq!(r.mu_star, 1.5);
        assert!((r.numeric_sigma2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_pair() {
        for c in [0.0, 0.3, 1.0, 4.0] {
            let r = het_moment_match(&GaussianMixtureSpec::constant(&[c, -c]).unwrap(), 0.0).unwrap();
            assert_eq!(r.mu_star, 0.0);
            assert!((r.numeric_sigma2 - (1.0 + c * c)).abs() < 1e-6, "{c}: {}", r.numeric_sigma2);
        }
    }

    #[test]
    fn golden_section_on_a_parabola() {
        let x = golden_section(|t| (t - 2.5).powi(2), -10.0, 10.0, 1e-10);
        assert!((x - 2.5).abs() < 1e-8);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(GaussianMixtureSpec::new(Vec::new()).is_err());
        let spec = GaussianMixtureSpec::constant(&[f64::NAN]).unwrap();
        assert!(het_moment_match(&spec, 0.0).is_err());
    }
}
