//! Exact information quantities on small discrete joints over (x, a, y).

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

const SUM_TOLERANCE: f64 = 1e-12;

/// `p(x, a, y)` stored with `y` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    p: Vec<f64>,
    pub n_x: usize,
    pub n_a: usize,
    pub n_y: usize,
}

/// Dirichlet draw via normalized gamma variates.
pub fn dirichlet<R: Rng>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> =
        alpha.iter().map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng)).collect();
    let s: f64 = g.iter().sum();
    if s > 0.0 {
        g.iter_mut().for_each(|v| *v /= s);
    } else {
        // every variate underflowed; fall back to the largest concentration
        let k = alpha.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |m| m.0);
        g[k] = 1.0;
    }
    g
}

impl DiscreteJoint {
    pub fn new(p: Vec<f64>, n_x: usize, n_a: usize, n_y: usize) -> Result<Self> {
        if p.len() != n_x * n_a * n_y || p.is_empty() {
            return Err(Error::Shape(format!("{} entries for a {n_x}x{n_a}x{n_y} joint", p.len())));
        }
        if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("joint entries must be finite and nonnegative".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Config(format!("joint sums to {total}, not 1")));
        }
        Ok(Self { p, n_x, n_a, n_y })
    }

    /// Flat Dirichlet(1) joint.
    pub fn random(n_x: usize, n_a: usize, n_y: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, 0x7e01);
        let mut p = dirichlet(&mut rng, &vec![1.0; n_x * n_a * n_y]);
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Self::new(p, n_x, n_a, n_y)
    }

    pub fn get(&self, x: usize, a: usize, y: usize) -> f64 {
        self.p[(x * self.n_a + a) * self.n_y + y]
    }

    pub fn p_x(&self, x: usize) -> f64 {
        (0..self.n_a).map(|a| self.p_xa(x, a)).sum()
    }

    pub fn p_xa(&self, x: usize, a: usize) -> f64 {
        (0..self.n_y).map(|y| self.get(x, a, y)).sum()
    }

    pub fn p_xy(&self, x: usize, y: usize) -> f64 {
        (0..self.n_a).map(|a| self.get(x, a, y)).sum()
    }

    /// `p(y | x)`; `None` when `p(x) = 0`.
    pub fn marginal(&self, x: usize) -> Option<Vec<f64>> {
        let px = self.p_x(x);
        (px > 0.0).then(|| (0..self.n_y).map(|y| self.p_xy(x, y) / px).collect())
    }

    /// `p(y | x, a)`; `None` when `p(x, a) = 0`.
    pub fn conditional(&self, x: usize, a: usize) -> Option<Vec<f64>> {
        let pxa = self.p_xa(x, a);
        (pxa > 0.0).then(|| (0..self.n_y).map(|y| self.get(x, a, y) / pxa).collect())
    }
}

fn xlogy_ratio(p: f64, num: f64, den: f64) -> f64 {
    if p > 0.0 {
        p * (num / den).ln()
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma1Result {
    pub i: f64,
    pub h_y_given_x: f64,
    pub h_y_given_xa: f64,
    /// `I = H(y|x) - H(y|x,a)` to 1e-10.
    pub identity_ok: bool,
    pub holds: bool,
}

/// Conditioning on `a` strictly lowers the entropy of `y` whenever
/// `I(y; a | x) > 0`.
pub fn lemma1_check(joint: &DiscreteJoint) -> Lemma1Result {
    let (mut i, mut hx, mut hxa) = (0.0, 0.0, 0.0);
    for x in 0..joint.n_x {
        let px = joint.p_x(x);
        for y in 0..joint.n_y {
            let pxy = joint.p_xy(x, y);
            hx -= xlogy_ratio(pxy, pxy, px);
        }
        for a in 0..joint.n_a {
            let pxa = joint.p_xa(x, a);
            for y in 0..joint.n_y {
                let p = joint.get(x, a, y);
                hxa -= xlogy_ratio(p, p, pxa);
                i += xlogy_ratio(p, p * px, pxa * joint.p_xy(x, y));
            }
        }
    }
    let identity_ok = (i - (hx - hxa)).abs() <= 1e-10;
    let holds = i <= 1e-10 || hxa < hx - 1e-12;
    Lemma1Result { i, h_y_given_x: hx, h_y_given_xa: hxa, identity_ok, holds }
}

/// `E_{x,a}[KL(p(y|x,a) || q(y|x))]` with `q` given per x (rows of length n_y).
pub fn expected_kl(joint: &DiscreteJoint, q: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in 0..joint.n_x {
        for a in 0..joint.n_a {
            let pxa = joint.p_xa(x, a);
            let Some(cond) = joint.conditional(x, a) else { continue };
            let kl: f64 = cond.iter().zip(&q[x]).map(|(&p, &qq)| xlogy_ratio(p, p, qq)).sum();
            total += pxa * kl;
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalityResult {
    pub kl_marginal: f64,
    pub min_challenger_kl: f64,
    pub holds: bool,
}

/// The marginal `p(y|x)` against random challengers `q(y|x)`: half are
/// Dirichlet perturbations of the marginal, half are uniform draws.
pub fn marginal_optimality_check(joint: &DiscreteJoint, n_challengers: usize, seed: u64) -> OptimalityResult {
    let uniform_row = vec![1.0 / joint.n_y as f64; joint.n_y];
    let marginal: Vec<Vec<f64>> =
        (0..joint.n_x).map(|x| joint.marginal(x).unwrap_or_else(|| uniform_row.clone())).collect();
    let kl_marginal = expected_kl(joint, &marginal);
    let mut rng = stream_rng(seed, 0x7e02);
    let mut min_challenger_kl = f64::INFINITY;
    for c in 0..n_challengers {
        let q: Vec<Vec<f64>> = marginal
            .iter()
            .map(|m| {
                let alpha: Vec<f64> =
                    if c % 2 == 0 { m.iter().map(|&p| 200.0 * p + 0.05).collect() } else { vec![1.0; joint.n_y] };
                dirichlet(&mut rng, &alpha)
            })
            .collect();
        min_challenger_kl = min_challenger_kl.min(expected_kl(joint, &q));
    }
    OptimalityResult { kl_marginal, min_challenger_kl, holds: kl_marginal <= min_challenger_kl + 1e-12 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_label() {
        // y = x, a irrelevant
        let mut p = vec![0.0; 2 * 2 * 2];
        for x in 0..2 {
            for a in 0..2 {
                p[(x * 2 + a) * 2 + x] = 0.25;
            }
        }
        let r = lemma1_check(&DiscreteJoint::new(p, 2, 2, 2).unwrap());
        assert_eq!(r.i, 0.0);
        assert_eq!(r.h_y_given_x, 0.0);
        assert_eq!(r.h_y_given_xa, 0.0);
        assert!(r.holds && r.identity_ok);
    }

    #[test]
    fn label_copies_pi() {
        let mut p = vec![0.0; 8];
        for x in 0..2 {
            for a in 0..2 {
                p[(x * 2 + a) * 2 + a] = 0.25;
            }
        }
        let r = lemma1_check(&DiscreteJoint::new(p, 2, 2, 2).unwrap());
        let ln2 = 2f64.ln();
        assert!((r.h_y_given_x - ln2).abs() < 1e-15);
        assert_eq!(r.h_y_given_xa, 0.0);
        assert!((r.i - ln2).abs() < 1e-15);
        assert!(r.holds);
    }

    #[test]
    fn invalid_joint() {
        assert!(DiscreteJoint::new(vec![0.5, 0.6], 1, 1, 2).is_err());
        assert!(DiscreteJoint::new(vec![1.5, -0.5], 1, 1, 2).is_err());
        assert!(DiscreteJoint::new(vec![1.0], 1, 1, 2).is_err());
    }

    #[test]
    fn common_conditional_has_zero_expected_kl() {
        let cond = [0.2, 0.5, 0.3];
        let px = [0.4, 0.6];
        let pa = [0.7, 0.3];
        let mut p = Vec::new();
        for x in 0..2 {
            for a in 0..2 {
                p.extend(cond.iter().map(|c| c * px[x] * pa[a]));
            }
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let j = DiscreteJoint::new(p, 2, 2, 3).unwrap();
        let r = marginal_optimality_check(&j, 20, 1);
        assert!(r.kl_marginal.abs() < 1e-15);
        assert!(r.holds);
    }

    #[test]
    fn hand_computed_two_by_two_by_two() {
        // one x value carries all mass; p(y=1|a=0) = 0.2, p(y=1|a=1) = 0.6, p(a=1) = 0.5
        let p = vec![0.4, 0.1, 0.2, 0.3, 0.0, 0.0, 0.0, 0.0];
        let j = DiscreteJoint::new(p, 2, 2, 2).unwrap();
        let r = marginal_optimality_check(&j, 10, 2);
        // marginal p(y=1|x=0) = 0.4
        let kl = |p: f64, q: f64| p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        let hand = 0.5 * kl(0.2, 0.4) + 0.5 * kl(0.6, 0.4);
        assert!((r.kl_marginal - hand).abs() < 1e-12);
    }
}
