//! The linear generative model with x-dependent privileged features and its
//! fixed design.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kv::{format_f64_list, parse_f64_list, KvConfig};
use crate::rng::{stream_rng, BoxMuller};

const STREAM_DESIGN: u64 = 0x10;
const STREAM_PI: u64 = 0x11;
const STREAM_NOISE: u64 = 0x12;

/// Eigenvalues below `-PSD_TOLERANCE` reject a covariance.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub type MeanFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type CovFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Conditional mean of the privileged features, `mu(x)`.
#[derive(Clone)]
pub enum MeanModel {
    Zero,
    /// `mu(x) = B x` with `B` of shape `m x d`.
    Linear(DMatrix<f64>),
    /// `mu(x) = c` for every `x`.
    Constant(DVector<f64>),
    Custom(MeanFn),
}

/// Conditional covariance of the privileged features, `Sigma(x)`.
#[derive(Clone)]
pub enum CovModel {
    Zero,
    /// `Sigma(x) = s I` (the value is a variance).
    Isotropic(f64),
    /// `Sigma(x) = diag(values)`.
    Diagonal(DVector<f64>),
    Custom(CovFn),
}

impl fmt::Debug for MeanModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanModel::Zero => write!(f, "Zero"),
            MeanModel::Linear(b) => write!(f, "Linear({}x{})", b.nrows(), b.ncols()),
            MeanModel::Constant(c) => write!(f, "Constant({:?})", c.as_slice()),
            MeanModel::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl fmt::Debug for CovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovModel::Zero => write!(f, "Zero"),
            CovModel::Isotropic(s) => write!(f, "Isotropic({s})"),
            CovModel::Diagonal(d) => write!(f, "Diagonal({:?})", d.as_slice()),
            CovModel::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// `y = x^T w* + a^T v* + eps`, `a | x ~ N(mu(x), Sigma(x))`, `eps ~ N(0, sigma^2)`.
#[derive(Clone, Debug)]
pub struct LinearGenerator {
    pub w_star: DVector<f64>,
    pub v_star: DVector<f64>,
    pub sigma: f64,
    pub mean: MeanModel,
    pub cov: CovModel,
}

impl LinearGenerator {
    pub fn new(w_star: DVector<f64>, v_star: DVector<f64>, sigma: f64, mean: MeanModel, cov: CovModel) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be a finite nonnegative number, got {sigma}")));
        }
        if w_star.is_empty() || v_star.is_empty() {
            return Err(Error::Config("w_star and v_star must be nonempty".into()));
        }
        let (d, m) = (w_star.len(), v_star.len());
        match &mean {
            MeanModel::Linear(b) if b.shape() != (m, d) => {
                return Err(Error::Shape(format!(
                    "linear mean matrix is {}x{}, expected {m}x{d}",
                    b.nrows(),
                    b.ncols()
                )))
            }
            MeanModel::Constant(c) if c.len() != m => {
                return Err(Error::Shape(format!("constant mean has length {}, expected {m}", c.len())))
            }
            _ => {}
        }
        if let CovModel::Diagonal(v) = &cov {
            if v.len() != m {
                return Err(Error::Shape(format!("diagonal covariance has length {}, expected {m}", v.len())));
            }
        }
        Ok(Self { w_star, v_star, sigma, mean, cov })
    }

    pub fn d(&self) -> usize {
        self.w_star.len()
    }

    pub fn m(&self) -> usize {
        self.v_star.len()
    }

    pub fn mean_at(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.mean {
            MeanModel::Zero => DVector::zeros(self.m()),
            MeanModel::Linear(b) => b * x,
            MeanModel::Constant(c) => c.clone(),
            MeanModel::Custom(f) => f(x),
        }
    }

    pub fn cov_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        match &self.cov {
            CovModel::Zero => DMatrix::zeros(m, m),
            CovModel::Isotropic(s) => DMatrix::identity(m, m) * *s,
            CovModel::Diagonal(v) => DMatrix::from_diagonal(v),
            CovModel::Custom(f) => f(x),
        }
    }

    /// `mu(X)`, one row per design row.
    pub fn mean_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), self.m());
        for i in 0..x.nrows() {
            let xi = x.row(i).transpose();
            out.set_row(i, &self.mean_at(&xi).transpose());
        }
        out
    }

    /// Diagonal of `Lambda`: `v*^T Sigma(x_i) v*` for each row.
    pub fn lambda_diag(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| {
                let s = self.cov_at(&x.row(i).transpose());
                (self.v_star.transpose() * &s * &self.v_star)[(0, 0)]
            }),
        )
    }

    /// Square-root factor `F` with `F F^T = Sigma(x_i)` for each row.
    fn cov_factors(&self, x: &DMatrix<f64>) -> Result<Vec<Option<DMatrix<f64>>>> {
        let m = self.m();
        (0..x.nrows())
            .map(|i| match &self.cov {
                CovModel::Zero => Ok(None),
                CovModel::Isotropic(s) => {
                    if *s < -PSD_TOLERANCE {
                        return Err(Error::NotPsd { row: i, min_eigenvalue: *s });
                    }
                    Ok(Some(DMatrix::identity(m, m) * s.max(0.0).sqrt()))
                }
                CovModel::Diagonal(v) => {
                    let min = v.min();
                    if min < -PSD_TOLERANCE {
                        return Err(Error::NotPsd { row: i, min_eigenvalue: min });
                    }
                    Ok(Some(DMatrix::from_diagonal(&v.map(|s| s.max(0.0).sqrt()))))
                }
                CovModel::Custom(f) => {
                    let s = f(&x.row(i).transpose());
                    if s.shape() != (m, m) {
                        return Err(Error::Shape(format!(
                            "covariance at row {i} is {}x{}, expected {m}x{m}",
                            s.nrows(),
                            s.ncols()
                        )));
                    }
                    let asym = (&s - s.transpose()).abs().max();
                    if asym > 1e-10 * (1.0 + s.abs().max()) {
                        return Err(Error::NotPsd { row: i, min_eigenvalue: f64::NAN });
                    }
                    let eig = SymmetricEigen::new(s);
                    let min = eig.eigenvalues.min();
                    if min < -PSD_TOLERANCE {
                        return Err(Error::NotPsd { row: i, min_eigenvalue: min });
                    }
                    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                    Ok(Some(&eig.eigenvectors * DMatrix::from_diagonal(&root)))
                }
            })
            .collect()
    }

    /// Check that every `Sigma(x_i)` is symmetric PSD.
    pub fn check_psd(&self, x: &DMatrix<f64>) -> Result<()> {
        self.cov_factors(x).map(|_| ())
    }

    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let d: usize = cfg.parse_required("d")?;
        let m: usize = cfg.parse_required("m")?;
        let sigma: f64 = cfg.parse_required("sigma")?;
        let w_star = DVector::from_vec(parse_f64_list(cfg.require("w_star")?)?);
        let v_star = DVector::from_vec(parse_f64_list(cfg.require("v_star")?)?);
        if w_star.len() != d || v_star.len() != m {
            return Err(Error::Shape(format!(
                "w_star has length {}, v_star has length {}; expected d={d}, m={m}",
                w_star.len(),
                v_star.len()
            )));
        }
        let mean = parse_mean_kind(cfg.get("mu_kind").unwrap_or("zero"), d, m)?;
        let cov = parse_cov_kind(cfg.get("cov_kind").unwrap_or("zero"), m)?;
        Self::new(w_star, v_star, sigma, mean, cov)
    }

    /// Inverse of [`LinearGenerator::from_kv`]; `n` is carried along for the
    /// design. Custom models have no text form.
    pub fn to_kv(&self, n: usize) -> Result<KvConfig> {
        let mut cfg = KvConfig::default();
        cfg.set("d", self.d().to_string());
        cfg.set("m", self.m().to_string());
        cfg.set("n", n.to_string());
        cfg.set("sigma", format!("{:?}", self.sigma));
        cfg.set("w_star", format_f64_list(self.w_star.as_slice()));
        cfg.set("v_star", format_f64_list(self.v_star.as_slice()));
        let mu = match &self.mean {
            MeanModel::Zero => "zero".to_string(),
            MeanModel::Linear(b) => {
                let rows: Vec<String> =
                    (0..b.nrows()).map(|i| format_f64_list(&b.row(i).iter().copied().collect::<Vec<_>>())).collect();
                format!("linear:{}", rows.join(";"))
            }
            MeanModel::Constant(c) => format!("constant:{}", format_f64_list(c.as_slice())),
            MeanModel::Custom(_) => return Err(Error::Config("custom mean has no text form".into())),
        };
        let cov = match &self.cov {
            CovModel::Zero => "zero".to_string(),
            CovModel::Isotropic(s) => format!("isotropic:{s:?}"),
            CovModel::Diagonal(v) => format!("diagonal:{}", format_f64_list(v.as_slice())),
            CovModel::Custom(_) => return Err(Error::Config("custom covariance has no text form".into())),
        };
        cfg.set("mu_kind", mu);
        cfg.set("cov_kind", cov);
        Ok(cfg)
    }
}

fn parse_mean_kind(text: &str, d: usize, m: usize) -> Result<MeanModel> {
    let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
    match kind.trim() {
        "zero" => Ok(MeanModel::Zero),
        "constant" => {
            let vals = parse_f64_list(arg)?;
            match vals.len() {
                1 => Ok(MeanModel::Constant(DVector::from_element(m, vals[0]))),
                k if k == m => Ok(MeanModel::Constant(DVector::from_vec(vals))),
                k => Err(Error::Config(format!("constant mean needs 1 or {m} values, got {k}"))),
            }
        }
        "linear" => {
            let rows: Vec<Vec<f64>> = arg.split(';').map(parse_f64_list).collect::<Result<_>>()?;
            if rows.len() != m || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("linear mean needs {m} rows of {d} values")));
            }
            Ok(MeanModel::Linear(DMatrix::from_fn(m, d, |i, j| rows[i][j])))
        }
        other => Err(Error::Config(format!("unknown mu_kind `{other}`"))),
    }
}

fn parse_cov_kind(text: &str, m: usize) -> Result<CovModel> {
    let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
    match kind.trim() {
        "zero" => Ok(CovModel::Zero),
        "isotropic" => {
            let s: f64 = arg.trim().parse().map_err(|_| Error::Config(format!("bad isotropic variance `{arg}`")))?;
            Ok(CovModel::Isotropic(s))
        }
        "diagonal" => {
            let v = parse_f64_list(arg)?;
            if v.len() != m {
                return Err(Error::Config(format!("diagonal covariance needs {m} values")));
            }
            Ok(CovModel::Diagonal(DVector::from_vec(v)))
        }
        other => Err(Error::Config(format!("unknown cov_kind `{other}`"))),
    }
}

/// A design matrix held fixed across all resampling.
#[derive(Clone, Debug)]
pub struct FixedDesign {
    x: DMatrix<f64>,
    m: usize,
}

impl FixedDesign {
    /// Validates `n > d + m` and that `X^T X` is well conditioned
    /// (smallest singular value of `X` above `1e-10` times the largest).
    pub fn new(x: DMatrix<f64>, m: usize) -> Result<Self> {
        let (n, d) = x.shape();
        if d == 0 || m == 0 {
            return Err(Error::Config("d and m must be positive".into()));
        }
        if n <= d + m {
            return Err(Error::Assumption(format!("need n > d + m, got n={n}, d={d}, m={m}")));
        }
        let sv = x.singular_values();
        if sv.min() <= 1e-10 * sv.max() {
            return Err(Error::Singular("design X is rank deficient".into()));
        }
        Ok(Self { x, m })
    }

    /// Standard normal design entries drawn from `seed`.
    pub fn gaussian(n: usize, d: usize, m: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, STREAM_DESIGN);
        let mut g = BoxMuller::new();
        // Column-major fill keeps the draw order independent of nalgebra internals.
        let data: Vec<f64> = (0..n * d).map(|_| g.sample(&mut rng)).collect();
        Self::new(DMatrix::from_vec(n, d, data), m)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn check_generator(&self, gen: &LinearGenerator) -> Result<()> {
        if gen.d() != self.d() || gen.m() != self.m() {
            return Err(Error::Shape(format!(
                "generator has d={}, m={}; design has d={}, m={}",
                gen.d(),
                gen.m(),
                self.d(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// Draw the privileged features `A` (n x m), row `i` from `N(mu(x_i), Sigma(x_i))`.
pub fn sample_pi(design: &FixedDesign, gen: &LinearGenerator, seed: u64) -> Result<DMatrix<f64>> {
    design.check_generator(gen)?;
    sample_pi_rows(design.x(), gen, seed)
}

pub(crate) fn sample_pi_rows(x: &DMatrix<f64>, gen: &LinearGenerator, seed: u64) -> Result<DMatrix<f64>> {
    let factors = gen.cov_factors(x)?;
    let mu = gen.mean_matrix(x);
    sample_pi_with(&mu, &factors, gen.m(), seed)
}

/// Precomputed pieces for repeated draws of `A` on one design.
pub(crate) struct PiSampler {
    mu: DMatrix<f64>,
    factors: Vec<Option<DMatrix<f64>>>,
    m: usize,
}

impl PiSampler {
    pub(crate) fn new(x: &DMatrix<f64>, gen: &LinearGenerator) -> Result<Self> {
        Ok(Self { mu: gen.mean_matrix(x), factors: gen.cov_factors(x)?, m: gen.m() })
    }

    pub(crate) fn mu(&self) -> &DMatrix<f64> {
        &self.mu
    }

    pub(crate) fn sample(&self, seed: u64) -> Result<DMatrix<f64>> {
        sample_pi_with(&self.mu, &self.factors, self.m, seed)
    }
}

fn sample_pi_with(mu: &DMatrix<f64>, factors: &[Option<DMatrix<f64>>], m: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = stream_rng(seed, STREAM_PI);
    let mut g = BoxMuller::new();
    let mut a = mu.clone();
    let mut z = DVector::zeros(m);
    for (i, factor) in factors.iter().enumerate() {
        if let Some(f) = factor {
            for k in 0..m {
                z[k] = g.sample(&mut rng);
            }
            let dev = f * &z;
            for k in 0..m {
                a[(i, k)] += dev[k];
            }
        }
    }
    Ok(a)
}

pub(crate) fn sample_noise(n: usize, sigma: f64, seed: u64) -> DVector<f64> {
    let mut rng = stream_rng(seed, STREAM_NOISE);
    let mut g = BoxMuller::new();
    DVector::from_iterator(n, (0..n).map(|_| sigma * g.sample(&mut rng)))
}

/// `y = X w* + A v* + eps` with fresh `eps ~ N(0, sigma^2)`.
pub fn sample_targets(x: &DMatrix<f64>, a: &DMatrix<f64>, gen: &LinearGenerator, seed: u64) -> Result<DVector<f64>> {
    let n = x.nrows();
    if a.nrows() != n || x.ncols() != gen.d() || a.ncols() != gen.m() {
        return Err(Error::Shape(format!(
            "X is {}x{}, A is {}x{}, generator has d={}, m={}",
            x.nrows(),
            x.ncols(),
            a.nrows(),
            a.ncols(),
            gen.d(),
            gen.m()
        )));
    }
    let eps = sample_noise(n, gen.sigma, seed);
    Ok(x * &gen.w_star + a * &gen.v_star + eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator(mean: MeanModel, cov: CovModel, sigma: f64) -> LinearGenerator {
        LinearGenerator::new(
            DVector::from_vec(vec![1.0, -0.5, 0.25]),
            DVector::from_vec(vec![0.8, -1.2]),
            sigma,
            mean,
            cov,
        )
        .unwrap()
    }

    #[test]
    fn zero_covariance_returns_the_mean() {
        let design = FixedDesign::gaussian(40, 3, 2, 1).unwrap();
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 0.5, 0.0]);
        let gen = generator(MeanModel::Linear(b), CovModel::Zero, 1.0);
        let a = sample_pi(&design, &gen, 9).unwrap();
        assert_eq!(a, gen.mean_matrix(design.x()));
    }

    #[test]
    fn standard_normal_pi_has_centered_columns() {
        let design = FixedDesign::gaussian(10_000, 3, 2, 2).unwrap();
        let gen = generator(MeanModel::Zero, CovModel::Isotropic(1.0), 1.0);
        let a = sample_pi(&design, &gen, 3).unwrap();
        for k in 0..2 {
            let mean = a.column(k).mean();
            assert!(mean.abs() < 4.0 / 100.0, "column {k} mean {mean}");
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let design = FixedDesign::gaussian(50, 3, 2, 4).unwrap();
        let gen = generator(MeanModel::Constant(DVector::from_vec(vec![1.0, 2.0])), CovModel::Isotropic(0.5), 0.3);
        let a1 = sample_pi(&design, &gen, 17).unwrap();
        let a2 = sample_pi(&design, &gen, 17).unwrap();
        assert_eq!(a1.as_slice(), a2.as_slice());
        let y1 = sample_targets(design.x(), &a1, &gen, 5).unwrap();
        let y2 = sample_targets(design.x(), &a1, &gen, 5).unwrap();
        assert_eq!(y1.as_slice(), y2.as_slice());
    }

    #[test]
    fn noiseless_targets_are_exact() {
        let design = FixedDesign::gaussian(30, 3, 2, 6).unwrap();
        let gen = generator(MeanModel::Zero, CovModel::Isotropic(1.0), 0.0);
        let a = sample_pi(&design, &gen, 1).unwrap();
        let y = sample_targets(design.x(), &a, &gen, 2).unwrap();
        let expected = design.x() * &gen.w_star + &a * &gen.v_star;
        assert_eq!(y, expected);
    }

    #[test]
    fn pure_noise_targets_have_unit_variance() {
        let design = FixedDesign::gaussian(10_000, 3, 2, 7).unwrap();
        let gen =
            LinearGenerator::new(DVector::zeros(3), DVector::zeros(2), 1.0, MeanModel::Zero, CovModel::Zero).unwrap();
        let a = sample_pi(&design, &gen, 1).unwrap();
        let y = sample_targets(design.x(), &a, &gen, 8).unwrap();
        let var = y.variance() * 10_000.0 / 9_999.0;
        assert!((0.94..=1.06).contains(&var), "variance {var}");
    }

    #[test]
    fn non_psd_covariance_names_the_row() {
        let design = FixedDesign::gaussian(20, 3, 2, 8).unwrap();
        let cov: CovFn = Arc::new(|x: &DVector<f64>| {
            if x[0] > 0.0 {
                DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])
            } else {
                DMatrix::identity(2, 2)
            }
        });
        let gen = generator(MeanModel::Zero, CovModel::Custom(cov), 1.0);
        let first_bad = (0..20).find(|&i| design.x()[(i, 0)] > 0.0).unwrap();
        match sample_pi(&design, &gen, 1) {
            Err(Error::NotPsd { row, min_eigenvalue }) => {
                assert_eq!(row, first_bad);
                assert!((min_eigenvalue + 1.0).abs() < 1e-12);
            }
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let design = FixedDesign::gaussian(20, 3, 2, 9).unwrap();
        let gen = generator(MeanModel::Zero, CovModel::Zero, 1.0);
        let a = DMatrix::zeros(19, 2);
        assert!(matches!(sample_targets(design.x(), &a, &gen, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn design_requires_enough_rows() {
        assert!(matches!(FixedDesign::gaussian(5, 3, 2, 1), Err(Error::Assumption(_))));
        let mut x = DMatrix::from_fn(20, 3, |i, j| (i * 3 + j) as f64);
        x.set_column(2, &(x.column(0) * 2.0));
        assert!(matches!(FixedDesign::new(x, 1), Err(Error::Singular(_))));
    }

    #[test]
    fn config_text_round_trips() {
        let text = "d = 3\nm = 2\nn = 50\nsigma = 0.5\nw_star = 1,2,3\nv_star = 0.5,-1\n\
                    mu_kind = linear:1,0,0;0,1,0.5\ncov_kind = diagonal:0.2,0.3\n";
        let cfg = KvConfig::parse(text).unwrap();
        let gen = LinearGenerator::from_kv(&cfg).unwrap();
        let back = LinearGenerator::from_kv(&gen.to_kv(50).unwrap()).unwrap();
        assert_eq!(back.w_star, gen.w_star);
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        assert_eq!(back.mean_at(&x), gen.mean_at(&x));
        assert_eq!(back.cov_at(&x), gen.cov_at(&x));
        assert!(LinearGenerator::from_kv(
            &KvConfig::parse("d=1\nm=1\nsigma=1\nw_star=1\nv_star=1\nmu_kind=weird").unwrap()
        )
        .is_err());
    }
}
