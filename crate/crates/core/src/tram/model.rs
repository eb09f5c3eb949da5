//! Parameter partition: feature extractor φ, privileged extractor ψ, the
//! marginal head w (plus an optional variance head) and the conditional head u.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpCache, MlpSpec, ParamBlock};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

impl Task {
    /// Width of a head output.
    pub fn output_dim(self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Classification { classes } => classes,
        }
    }
}

/// How ψ combines φ(x) and a.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PsiWiring {
    /// One hidden layer on concat(φ(x), a).
    #[default]
    Concat,
    /// A first layer on a alone, then a layer on concat(first output, φ(x)).
    PiFirst,
}

impl fmt::Display for PsiWiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsiWiring::Concat => "concat",
            PsiWiring::PiFirst => "pi_first",
        })
    }
}

impl FromStr for PsiWiring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(PsiWiring::Concat),
            "pi_first" => Ok(PsiWiring::PiFirst),
            _ => Err(Error::Parse(format!("unknown psi wiring '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TramSpec {
    pub input_dim: usize,
    /// 0 builds a model without the ψ path and conditional head.
    pub pi_dim: usize,
    pub task: Task,
    pub phi_widths: Vec<usize>,
    pub psi_width: usize,
    pub wiring: PsiWiring,
    pub het: bool,
    pub init_seed: u64,
}

impl TramSpec {
    /// φ = two tanh layers of width 64, ψ = one tanh layer of width 64.
    pub fn synthetic(input_dim: usize, pi_dim: usize, task: Task, init_seed: u64) -> Self {
        Self {
            input_dim,
            pi_dim,
            task,
            phi_widths: vec![64, 64],
            psi_width: 64,
            wiring: PsiWiring::Concat,
            het: false,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.phi_widths.is_empty() || self.phi_widths.contains(&0) || self.psi_width == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if let Task::Classification { classes } = self.task {
            if classes < 2 {
                return Err(Error::Config(format!("classification needs at least 2 classes, got {classes}")));
            }
        }
        Ok(())
    }

    pub fn phi_dim(&self) -> usize {
        *self.phi_widths.last().expect("validated")
    }
}

/// The ψ network.
#[derive(Clone, Debug)]
pub struct Psi {
    pub wiring: PsiWiring,
    pub phi_dim: usize,
    pub first: Mlp,
    /// Present for [`PsiWiring::PiFirst`].
    pub second: Option<Mlp>,
}

#[derive(Clone, Debug)]
pub struct PsiCache {
    first: MlpCache,
    second: Option<MlpCache>,
}

impl Psi {
    pub fn output_dim(&self) -> usize {
        self.second.as_ref().unwrap_or(&self.first).output_dim()
    }

    pub fn forward(&self, phi: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<(DMatrix<f64>, PsiCache)> {
        if phi.nrows() != a.nrows() {
            return Err(Error::Shape(format!("{} feature rows but {} PI rows", phi.nrows(), a.nrows())));
        }
        match &self.second {
            None => {
                let (out, first) = self.first.forward(&hcat(phi, a))?;
                Ok((out, PsiCache { first, second: None }))
            }
            Some(second) => {
                let (h, first) = self.first.forward(a)?;
                let (out, c2) = second.forward(&hcat(&h, phi))?;
                Ok((out, PsiCache { first, second: Some(c2) }))
            }
        }
    }

    pub fn predict(&self, phi: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(phi, a)?.0)
    }

    /// Gradients for (first, second) and the gradient with respect to φ(x).
    pub fn backward(
        &self,
        cache: &PsiCache,
        upstream: &DMatrix<f64>,
    ) -> Result<(ParamBlock, Option<ParamBlock>, DMatrix<f64>)> {
        match (&self.second, &cache.second) {
            (None, None) => {
                let (g, dinput) = self.first.backward(&cache.first, upstream)?;
                Ok((g, None, dinput.columns(0, self.phi_dim).into_owned()))
            }
            (Some(second), Some(c2)) => {
                let (g2, dcat) = second.backward(c2, upstream)?;
                let h_dim = self.first.output_dim();
                let dh = dcat.columns(0, h_dim).into_owned();
                let dphi = dcat.columns(h_dim, dcat.ncols() - h_dim).into_owned();
                let (g1, _) = self.first.backward(&cache.first, &dh)?;
                Ok((g1, Some(g2), dphi))
            }
            _ => Err(Error::StaleCache("psi cache does not match the wiring".into())),
        }
    }

    /// Zero every weight that reads `a`, making ψ independent of the PI.
    pub fn zero_pi_weights(&mut self) {
        let phi_dim = self.phi_dim;
        match self.wiring {
            PsiWiring::Concat => {
                let mut w = self.first.params_mut().tensor_at_mut(0);
                let rows = w.nrows();
                w.rows_mut(phi_dim, rows - phi_dim).fill(0.0);
            }
            PsiWiring::PiFirst => self.first.params_mut().tensor_at_mut(0).fill(0.0),
        }
    }
}

pub(crate) fn hcat(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}

#[derive(Clone, Debug)]
pub struct TramModel {
    pub spec: TramSpec,
    pub phi: Mlp,
    pub psi: Option<Psi>,
    pub head_w: Mlp,
    pub head_u: Option<Mlp>,
    /// Variance (regression) or logit-noise scale (classification) head on φ.
    pub het_w: Option<Mlp>,
}

// streams for the per-block init seeds
const PHI: u64 = 1;
const PSI_FIRST: u64 = 2;
const PSI_SECOND: u64 = 3;
const HEAD_W: u64 = 4;
const HEAD_U: u64 = 5;
const HET_W: u64 = 6;

pub fn build_tram(spec: TramSpec) -> Result<TramModel> {
    spec.validate()?;
    let seed = |s| derive_seed(spec.init_seed, s);
    let phi = Mlp::new(MlpSpec::new(
        spec.input_dim,
        spec.phi_widths.clone(),
        vec![Activation::Tanh; spec.phi_widths.len()],
        seed(PHI),
    ))?;
    let phi_dim = spec.phi_dim();
    let out = spec.task.output_dim();
    let tanh = |i, w, s| MlpSpec::new(i, vec![w], vec![Activation::Tanh], s);
    let psi = if spec.pi_dim == 0 {
        None
    } else {
        Some(match spec.wiring {
            PsiWiring::Concat => Psi {
                wiring: spec.wiring,
                phi_dim,
                first: Mlp::new(tanh(phi_dim + spec.pi_dim, spec.psi_width, seed(PSI_FIRST)))?,
                second: None,
            },
            PsiWiring::PiFirst => Psi {
                wiring: spec.wiring,
                phi_dim,
                first: Mlp::new(tanh(spec.pi_dim, spec.psi_width, seed(PSI_FIRST)))?,
                second: Some(Mlp::new(tanh(spec.psi_width + phi_dim, spec.psi_width, seed(PSI_SECOND)))?),
            },
        })
    };
    let head_u = match &psi {
        Some(p) => Some(Mlp::new(MlpSpec::affine(p.output_dim(), out, seed(HEAD_U)))?),
        None => None,
    };
    let het_w = if spec.het { Some(Mlp::new(MlpSpec::affine(phi_dim, out, seed(HET_W)))?) } else { None };
    let head_w = Mlp::new(MlpSpec::affine(phi_dim, out, seed(HEAD_W)))?;
    Ok(TramModel { spec, phi, psi, head_w, head_u, het_w })
}

impl TramModel {
    pub fn task(&self) -> Task {
        self.spec.task
    }

    pub fn has_pi_path(&self) -> bool {
        self.psi.is_some()
    }

    pub fn phi_features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.phi.predict(x)
    }

    /// Marginal head output: logits, or the mean column for regression.
    pub fn marginal_raw(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.head_w.predict(&self.phi.predict(x)?)
    }

    /// Conditional head output through the ψ path.
    pub fn conditional_raw(&self, x: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.conditional_from_phi(&self.phi.predict(x)?, a)
    }

    pub(crate) fn conditional_from_phi(&self, phi: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (psi, head_u) = self.pi_path()?;
        if a.ncols() != self.spec.pi_dim {
            return Err(Error::Shape(format!("PI has {} columns, model expects {}", a.ncols(), self.spec.pi_dim)));
        }
        head_u.predict(&psi.predict(phi, a)?)
    }

    pub(crate) fn pi_path(&self) -> Result<(&Psi, &Mlp)> {
        match (&self.psi, &self.head_u) {
            (Some(p), Some(u)) => Ok((p, u)),
            _ => Err(Error::ModelMismatch("model was built without a PI path".into())),
        }
    }

    pub fn zero_pi_weights(&mut self) {
        if let Some(psi) = self.psi.as_mut() {
            psi.zero_pi_weights();
        }
    }

    /// All blocks as one named block (`phi.`, `psi.`, `psi2.`, `head_w.`, `head_u.`, `het_w.`).
    pub fn all_params(&self) -> ParamBlock {
        let mut parts: Vec<(&str, &ParamBlock)> = vec![("phi", self.phi.params())];
        if let Some(psi) = &self.psi {
            parts.push(("psi", psi.first.params()));
            if let Some(s) = &psi.second {
                parts.push(("psi2", s.params()));
            }
        }
        parts.push(("head_w", self.head_w.params()));
        if let Some(u) = &self.head_u {
            parts.push(("head_u", u.params()));
        }
        if let Some(h) = &self.het_w {
            parts.push(("het_w", h.params()));
        }
        ParamBlock::concat_prefixed(&parts)
    }

    /// Inverse of [`TramModel::all_params`] for a model built from the same spec.
    pub fn load_all_params(&mut self, block: &ParamBlock) -> Result<()> {
        let set = |mlp: &mut Mlp, prefix: &str| -> Result<()> {
            let part = block.extract_prefixed(prefix)?;
            if !part.same_layout(mlp.params()) {
                return Err(Error::Shape(format!("block '{prefix}' does not match the model layout")));
            }
            *mlp.params_mut() = part;
            Ok(())
        };
        set(&mut self.phi, "phi")?;
        if let Some(psi) = self.psi.as_mut() {
            set(&mut psi.first, "psi")?;
            if let Some(s) = psi.second.as_mut() {
                set(s, "psi2")?;
            }
        }
        set(&mut self.head_w, "head_w")?;
        if let Some(u) = self.head_u.as_mut() {
            set(u, "head_u")?;
        }
        if let Some(h) = self.het_w.as_mut() {
            set(h, "het_w")?;
        }
        Ok(())
    }

    /// Address ranges of each block's storage, for the disjointness check.
    pub fn storage_ranges(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let range = |b: &ParamBlock| {
            let s = b.as_slice();
            let start = s.as_ptr() as usize;
            start..start + std::mem::size_of_val(s)
        };
        let mut out = vec![("phi", range(self.phi.params())), ("head_w", range(self.head_w.params()))];
        if let Some(psi) = &self.psi {
            out.push(("psi", range(psi.first.params())));
            if let Some(s) = &psi.second {
                out.push(("psi2", range(s.params())));
            }
        }
        if let Some(u) = &self.head_u {
            out.push(("head_u", range(u.params())));
        }
        if let Some(h) = &self.het_w {
            out.push(("het_w", range(h.params())));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, uniform};

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 0);
        DMatrix::from_fn(rows, cols, |_, _| uniform(&mut rng, -1.0, 1.0))
    }

    #[test]
    fn blocks_are_disjoint() {
        for wiring in [PsiWiring::Concat, PsiWiring::PiFirst] {
            let mut spec = TramSpec::synthetic(3, 2, Task::Classification { classes: 4 }, 1);
            spec.wiring = wiring;
            spec.het = true;
            let m = build_tram(spec).unwrap();
            let r = m.storage_ranges();
            for i in 0..r.len() {
                for j in i + 1..r.len() {
                    assert!(r[i].1.end <= r[j].1.start || r[j].1.end <= r[i].1.start, "{} / {}", r[i].0, r[j].0);
                }
            }
        }
    }

    #[test]
    fn heads_give_finite_outputs_of_the_right_shape() {
        let m = build_tram(TramSpec::synthetic(2, 3, Task::Classification { classes: 5 }, 2)).unwrap();
        let x = random(7, 2, 1);
        let a = random(7, 3, 2);
        let q = m.marginal_raw(&x).unwrap();
        let c = m.conditional_raw(&x, &a).unwrap();
        assert_eq!(q.shape(), (7, 5));
        assert_eq!(c.shape(), (7, 5));
        assert!(q.iter().chain(c.iter()).all(|v| v.is_finite()));
        assert!(m.conditional_raw(&x, &random(7, 2, 3)).is_err());
    }

    #[test]
    fn synthetic_architecture() {
        let m = build_tram(TramSpec::synthetic(1, 1, Task::Regression, 0)).unwrap();
        assert_eq!(m.phi.spec().layer_dims, vec![64, 64]);
        assert!(m.phi.spec().activations.iter().all(|a| *a == Activation::Tanh));
        let psi = m.psi.as_ref().unwrap();
        assert_eq!(psi.first.input_dim(), 65);
        assert_eq!(psi.first.spec().layer_dims, vec![64]);
        assert!(psi.second.is_none());
        assert_eq!(m.head_w.spec().layer_dims, vec![1]);
    }

    #[test]
    fn zeroed_pi_weights_remove_the_dependence_on_a() {
        for wiring in [PsiWiring::Concat, PsiWiring::PiFirst] {
            let mut spec = TramSpec::synthetic(2, 3, Task::Regression, 5);
            spec.wiring = wiring;
            let mut m = build_tram(spec).unwrap();
            let x = random(4, 2, 1);
            assert_ne!(
                m.conditional_raw(&x, &random(4, 3, 2)).unwrap(),
                m.conditional_raw(&x, &random(4, 3, 3)).unwrap()
            );
            m.zero_pi_weights();
            assert_eq!(
                m.conditional_raw(&x, &random(4, 3, 2)).unwrap(),
                m.conditional_raw(&x, &random(4, 3, 3)).unwrap()
            );
        }
    }

    #[test]
    fn params_round_trip() {
        let a = build_tram(TramSpec::synthetic(2, 1, Task::Regression, 1)).unwrap();
        let mut b = build_tram(TramSpec::synthetic(2, 1, Task::Regression, 2)).unwrap();
        assert_ne!(a.all_params(), b.all_params());
        b.load_all_params(&a.all_params()).unwrap();
        assert_eq!(a.all_params(), b.all_params());
    }

    #[test]
    fn no_pi_model_has_no_conditional_head() {
        let m = build_tram(TramSpec::synthetic(1, 0, Task::Regression, 1)).unwrap();
        assert!(!m.has_pi_path());
        assert!(m.conditional_raw(&random(2, 1, 0), &random(2, 0, 0)).is_err());
        assert!(build_tram(TramSpec { phi_widths: vec![0], ..TramSpec::synthetic(1, 1, Task::Regression, 0) }).is_err());
    }
}
