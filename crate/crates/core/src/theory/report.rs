use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::discrete::{lemma1_check, marginal_optimality_check, DiscreteJoint};
use super::het::{het_moment_match, ComponentMean, GaussianMixtureSpec};
use crate::error::Result;
use crate::rng::{derive_seed, stream_rng};

const HET_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TheorySuiteConfig {
    pub lemma_joints: usize,
    pub optimality_joints: usize,
    pub challengers: usize,
    pub het_specs: usize,
    pub seed: u64,
}

impl Default for TheorySuiteConfig {
    fn default() -> Self {
        Self { lemma_joints: 100, optimality_joints: 50, challengers: 100, het_specs: 100, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TheoryReport {
    pub lines: Vec<CheckLine>,
}

impl TheoryReport {
    pub fn failures(&self) -> usize {
        self.lines.iter().filter(|l| !l.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(if l.passed { "PASS " } else { "FAIL " });
            s.push_str(&l.name);
            s.push(' ');
            s.push_str(&l.detail);
            s.push('\n');
        }
        s
    }
}

fn random_joint(seed: u64) -> Result<DiscreteJoint> {
    let mut rng = stream_rng(seed, 0x7e10);
    let n_x = rng.random_range(1..=4);
    let n_a = rng.random_range(2..=4);
    let n_y = rng.random_range(2..=4);
    DiscreteJoint::random(n_x, n_a, n_y, seed)
}

/// Affine component means `c_m + s_m x` with random coefficients.
fn random_mixture(seed: u64) -> Result<(GaussianMixtureSpec, f64)> {
    let mut rng = stream_rng(seed, 0x7e11);
    let m = rng.random_range(1..=6);
    let means = (0..m)
        .map(|_| {
            let c = rng.random_range(-3.0..3.0);
            let s = rng.random_range(-2.0..2.0);
            Arc::new(move |x: f64| c + s * x) as ComponentMean
        })
        .collect();
    Ok((GaussianMixtureSpec::new(means)?, rng.random_range(-1.0..1.0)))
}

pub fn run_theory_suite(cfg: &TheorySuiteConfig) -> Result<TheoryReport> {
    let mut lines = Vec::new();

    let lemma: Vec<CheckLine> = (0..cfg.lemma_joints)
        .into_par_iter()
        .map(|i| -> Result<CheckLine> {
            let r = lemma1_check(&random_joint(derive_seed(cfg.seed, 0x1000 + i as u64))?);
            Ok(CheckLine {
                name: format!("lemma1[{i}]"),
                passed: r.holds && r.identity_ok,
                detail: format!("I={:.6e} H_y|x={:.6e} H_y|xa={:.6e}", r.i, r.h_y_given_x, r.h_y_given_xa),
            })
        })
        .collect::<Result<_>>()?;
    lines.extend(lemma);

    let opt: Vec<CheckLine> = (0..cfg.optimality_joints)
        .into_par_iter()
        .map(|i| -> Result<CheckLine> {
            let seed = derive_seed(cfg.seed, 0x2000 + i as u64);
            let r = marginal_optimality_check(&random_joint(seed)?, cfg.challengers, seed);
            Ok(CheckLine {
                name: format!("marginal_optimality[{i}]"),
                passed: r.holds,
                detail: format!("kl_marginal={:.6e} min_challenger={:.6e}", r.kl_marginal, r.min_challenger_kl),
            })
        })
        .collect::<Result<_>>()?;
    lines.extend(opt);

    let het: Vec<CheckLine> = (0..cfg.het_specs)
        .into_par_iter()
        .map(|i| -> Result<CheckLine> {
            let (spec, x) = random_mixture(derive_seed(cfg.seed, 0x3000 + i as u64))?;
            let r = het_moment_match(&spec, x)?;
            let err = (r.numeric_sigma2 - r.sigma2_star).abs();
            Ok(CheckLine {
                name: format!("het_moment_match[{i}]"),
                passed: err <= HET_TOLERANCE,
                detail: format!(
                    "M={} mu*={:.6} numeric_sigma2={:.8} moment_match={:.8} printed={:.6}",
                    spec.m(),
                    r.mu_star,
                    r.numeric_sigma2,
                    r.sigma2_star,
                    r.printed_sigma2
                ),
            })
        })
        .collect::<Result<_>>()?;
    lines.extend(het);

    // spread between the two components grows with x
    let spread = GaussianMixtureSpec::new(vec![Arc::new(|x: f64| x), Arc::new(|x: f64| -x)])?;
    let (lo, hi) = (het_moment_match(&spread, 0.5)?, het_moment_match(&spread, 2.0)?);
    lines.push(CheckLine {
        name: "heteroscedastic".into(),
        passed: (hi.numeric_sigma2 - lo.numeric_sigma2).abs() > 1e-3,
        detail: format!("sigma2(0.5)={:.6} sigma2(2.0)={:.6}", lo.numeric_sigma2, hi.numeric_sigma2),
    });

    Ok(TheoryReport { lines })
}
