//! Least-squares estimators with and without privileged features.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Which estimator / prediction rule is being evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    NoPI,
    PIMeanImpute,
    MargNoPI,
    MargPI,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] =
        [EstimatorKind::NoPI, EstimatorKind::PIMeanImpute, EstimatorKind::MargNoPI, EstimatorKind::MargPI];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::NoPI => "no_pi",
            EstimatorKind::PIMeanImpute => "pi_mean_impute",
            EstimatorKind::MargNoPI => "marg_no_pi",
            EstimatorKind::MargPI => "marg_pi",
        }
    }

    pub fn uses_pi(self) -> bool {
        matches!(self, EstimatorKind::PIMeanImpute | EstimatorKind::MargPI)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown estimator kind `{s}`")))
    }
}

/// Thin QR factorization of a full-column-rank matrix.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = m.shape();
        if k == 0 || n < k {
            return Err(Error::Singular(format!("{n}x{k} matrix cannot have full column rank")));
        }
        let qr = m.clone().qr();
        let r = qr.r();
        let sv = r.singular_values();
        let max = sv.max();
        if !(max > 0.0) || sv.min() <= RANK_TOLERANCE * max {
            return Err(Error::Singular(format!(
                "{n}x{k} matrix is rank deficient (singular values in [{:e}, {:e}])",
                sv.min(),
                max
            )));
        }
        Ok(Self { q: qr.q(), r })
    }

    pub fn solve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.q.nrows() {
            return Err(Error::Shape(format!("rhs has length {}, expected {}", y.len(), self.q.nrows())));
        }
        let qty = self.q.transpose() * y;
        self.r.solve_upper_triangular(&qty).ok_or_else(|| Error::Singular("triangular factor".into()))
    }

    /// `M (M^T M)^{-1} M^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.q * self.q.transpose()
    }

    /// `(M^T M)^{-1} M^T`, i.e. the pseudo-inverse.
    pub fn pinv(&self) -> Result<DMatrix<f64>> {
        self.r.solve_upper_triangular(&self.q.transpose()).ok_or_else(|| Error::Singular("triangular factor".into()))
    }

    /// `||B (M^T M)^{-1} M^T||_F^2 = ||B R^{-1}||_F^2` without forming the n x n operator.
    pub fn operator_norm_sq(&self, b: &DMatrix<f64>) -> Result<f64> {
        // B R^{-1} = (R^{-T} B^T)^T
        let z = self
            .r
            .tr_solve_upper_triangular(&b.transpose())
            .ok_or_else(|| Error::Singular("triangular factor".into()))?;
        Ok(z.norm_squared())
    }
}

/// Orthogonal projector onto the column span of `m`.
pub fn projector(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(LeastSquares::new(m)?.projector())
}

/// `[X, A]`.
pub fn hstack(x: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != a.nrows() {
        return Err(Error::Shape(format!("cannot stack {} rows with {} rows", x.nrows(), a.nrows())));
    }
    let (n, d, m) = (x.nrows(), x.ncols(), a.ncols());
    let mut q = DMatrix::zeros(n, d + m);
    q.columns_mut(0, d).copy_from(x);
    q.columns_mut(d, m).copy_from(a);
    Ok(q)
}

/// `(X^T X)^{-1} X^T y`.
pub fn fit_no_pi(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    LeastSquares::new(x)?.solve(y)
}

/// Joint fit on `[X, A]`, split into `(w_hat, v_hat)`.
pub fn fit_joint(x: &DMatrix<f64>, a: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let q = hstack(x, a)?;
    let beta = LeastSquares::new(&q)?.solve(y)?;
    let d = x.ncols();
    Ok((beta.rows(0, d).into_owned(), beta.rows(d, a.ncols()).into_owned()))
}

/// The block operators `H_{a_perp}` (d x n) and `G_{x_perp}` (m x n).
#[derive(Clone, Debug)]
pub struct BlockOperators {
    pub h_a_perp: DMatrix<f64>,
    pub g_x_perp: DMatrix<f64>,
}

impl BlockOperators {
    /// Built from the partial residualizations `X_{a_perp} = (I - Pi_a) X` and
    /// `A_{x_perp} = (I - Pi_x) A`.
    pub fn new(x: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != a.nrows() {
            return Err(Error::Shape(format!("X has {} rows, A has {}", x.nrows(), a.nrows())));
        }
        let n = x.nrows();
        let pi_x = LeastSquares::new(x)?.projector();
        let pi_a = LeastSquares::new(a)?.projector();
        let id = DMatrix::<f64>::identity(n, n);
        let x_a_perp = (&id - pi_a) * x;
        let a_x_perp = (&id - pi_x) * a;
        let h_a_perp = LeastSquares::new(&x_a_perp)?.pinv()?;
        let g_x_perp = LeastSquares::new(&a_x_perp)?.pinv()?;
        Ok(Self { h_a_perp, g_x_perp })
    }

    /// `K = X H_{a_perp} + mu G_{x_perp}`.
    pub fn k(&self, x: &DMatrix<f64>, mu: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.h_a_perp + mu * &self.g_x_perp
    }

    /// `L = X H_{a_perp} + A G_{x_perp}`.
    pub fn l(&self, x: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.h_a_perp + a * &self.g_x_perp
    }
}

/// Joint fit through the block-inverse formulas.
pub fn fit_joint_blockwise(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if y.len() != x.nrows() {
        return Err(Error::Shape(format!("y has length {}, expected {}", y.len(), x.nrows())));
    }
    let ops = BlockOperators::new(x, a)?;
    Ok((&ops.h_a_perp * y, &ops.g_x_perp * y))
}

/// Fitted coefficients; `v_hat` is absent for the estimators that ignore PI.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedParams {
    pub w_hat: DVector<f64>,
    pub v_hat: Option<DVector<f64>>,
}

/// Test-time side information.
#[derive(Clone, Debug, Default)]
pub struct PredictContext<'a> {
    /// `mu(X)` for the rows being predicted.
    pub mu: Option<&'a DMatrix<f64>>,
}

/// Predictions for `x` under `kind`. The marginalized no-PI rule expects
/// `params.w_hat` to already be `E_a[w_hat0]` (see [`fit_for_kind`]).
pub fn predict(
    kind: EstimatorKind,
    params: &FittedParams,
    x: &DMatrix<f64>,
    ctx: &PredictContext<'_>,
) -> Result<DVector<f64>> {
    if params.w_hat.len() != x.ncols() {
        return Err(Error::Shape(format!("w_hat has length {}, X has {} columns", params.w_hat.len(), x.ncols())));
    }
    let base = x * &params.w_hat;
    match kind {
        EstimatorKind::NoPI | EstimatorKind::MargNoPI => Ok(base),
        EstimatorKind::PIMeanImpute | EstimatorKind::MargPI => {
            let mu = ctx.mu.ok_or_else(|| Error::MissingContext(format!("{kind} prediction needs mu(X)")))?;
            let v =
                params.v_hat.as_ref().ok_or_else(|| Error::MissingContext(format!("{kind} prediction needs v_hat")))?;
            if mu.nrows() != x.nrows() || mu.ncols() != v.len() {
                return Err(Error::Shape(format!(
                    "mu(X) is {}x{}, expected {}x{}",
                    mu.nrows(),
                    mu.ncols(),
                    x.nrows(),
                    v.len()
                )));
            }
            Ok(base + mu * v)
        }
    }
}

/// Training data for one replicate.
#[derive(Clone, Debug)]
pub struct TrainingDraw<'a> {
    pub x: &'a DMatrix<f64>,
    pub a: &'a DMatrix<f64>,
    pub mu: &'a DMatrix<f64>,
    pub eps: &'a DVector<f64>,
    pub w_star: &'a DVector<f64>,
    pub v_star: &'a DVector<f64>,
}

/// Fit the coefficients used by `kind`. For `MargNoPI`, `A` is replaced by
/// `mu(X)` in the target so the result equals `E_a[w_hat0]`.
pub fn fit_for_kind(kind: EstimatorKind, draw: &TrainingDraw<'_>) -> Result<FittedParams> {
    let signal = draw.x * draw.w_star + draw.eps;
    match kind {
        EstimatorKind::NoPI => {
            let y = signal + draw.a * draw.v_star;
            Ok(FittedParams { w_hat: fit_no_pi(draw.x, &y)?, v_hat: None })
        }
        EstimatorKind::MargNoPI => {
            let y = signal + draw.mu * draw.v_star;
            Ok(FittedParams { w_hat: fit_no_pi(draw.x, &y)?, v_hat: None })
        }
        EstimatorKind::PIMeanImpute | EstimatorKind::MargPI => {
            let y = signal + draw.a * draw.v_star;
            let (w, v) = fit_joint(draw.x, draw.a, &y)?;
            Ok(FittedParams { w_hat: w, v_hat: Some(v) })
        }
    }
}
