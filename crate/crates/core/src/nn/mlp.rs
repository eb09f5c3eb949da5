//! Dense layers, parameter storage and reverse-mode gradients.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, uniform};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Softplus,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Softplus => softplus(z),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and output `h`.
    pub fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Softplus => sigmoid(z),
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softplus" => Ok(Activation::Softplus),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.max(0.0) + (-z.abs()).exp().ln_1p()
    }
}

/// Layer widths and activations of a dense network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub init_seed: u64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, layer_dims: Vec<usize>, activations: Vec<Activation>, init_seed: u64) -> Self {
        Self { input_dim, layer_dims, activations, init_seed }
    }

    /// A single affine layer.
    pub fn affine(input_dim: usize, output_dim: usize, init_seed: u64) -> Self {
        Self::new(input_dim, vec![output_dim], vec![Activation::Identity], init_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.layer_dims.len() != self.activations.len() {
            return Err(Error::Config(format!(
                "{} layer widths but {} activations",
                self.layer_dims.len(),
                self.activations.len()
            )));
        }
        if self.input_dim == 0 || self.layer_dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap_or(&0)
    }

    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.layer_dims[layer - 1]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named matrices packed into one flat column-major buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    tensors: Vec<TensorInfo>,
    data: Vec<f64>,
}

impl ParamBlock {
    pub fn zeros(shapes: &[(String, usize, usize)]) -> Self {
        let mut offset = 0;
        let tensors = shapes
            .iter()
            .map(|(name, rows, cols)| {
                let t = TensorInfo { name: name.clone(), rows: *rows, cols: *cols, offset };
                offset += rows * cols;
                t
            })
            .collect();
        Self { tensors, data: vec![0.0; offset] }
    }

    pub fn from_parts(shapes: &[(String, usize, usize)], data: Vec<f64>) -> Result<Self> {
        let mut block = Self::zeros(shapes);
        if block.data.len() != data.len() {
            return Err(Error::Shape(format!("layout needs {} values, got {}", block.data.len(), data.len())));
        }
        block.data = data;
        Ok(block)
    }

    pub fn zeros_like(&self) -> Self {
        Self { tensors: self.tensors.clone(), data: vec![0.0; self.data.len()] }
    }

    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        self.tensors.iter().map(|t| (t.name.clone(), t.rows, t.cols)).collect()
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::Shape(format!("flat view has {} values, got {}", self.data.len(), values.len())));
        }
        self.data.copy_from_slice(values);
        Ok(())
    }

    pub fn same_layout(&self, other: &ParamBlock) -> bool {
        self.tensors == other.tensors
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Shape(format!("no tensor named `{name}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<DMatrixView<'_, f64>> {
        Ok(self.tensor_at(self.index_of(name)?))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<DMatrixViewMut<'_, f64>> {
        let i = self.index_of(name)?;
        Ok(self.tensor_at_mut(i))
    }

    pub fn tensor_at(&self, i: usize) -> DMatrixView<'_, f64> {
        let t = &self.tensors[i];
        DMatrixView::from_slice(&self.data[t.offset..t.offset + t.len()], t.rows, t.cols)
    }

    pub fn tensor_at_mut(&mut self, i: usize) -> DMatrixViewMut<'_, f64> {
        let t = &self.tensors[i];
        let (rows, cols, off, len) = (t.rows, t.cols, t.offset, t.len());
        DMatrixViewMut::from_slice(&mut self.data[off..off + len], rows, cols)
    }

    /// Name of the tensor holding flat index `i`.
    pub fn name_at(&self, i: usize) -> &str {
        self.tensors
            .iter()
            .find(|t| i >= t.offset && i < t.offset + t.len())
            .map(|t| t.name.as_str())
            .unwrap_or("<out of range>")
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &ParamBlock) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Shape("parameter layouts differ".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Concatenate blocks, prefixing tensor names with `prefix/`.
    pub fn concat_prefixed(blocks: &[(&str, &ParamBlock)]) -> ParamBlock {
        let mut shapes = Vec::new();
        let mut data = Vec::new();
        for (prefix, b) in blocks {
            for t in &b.tensors {
                shapes.push((format!("{prefix}/{}", t.name), t.rows, t.cols));
            }
            data.extend_from_slice(&b.data);
        }
        ParamBlock::from_parts(&shapes, data).expect("layout built from parts")
    }

    /// Extract the tensors named `prefix/...`, with the prefix removed.
    pub fn extract_prefixed(&self, prefix: &str) -> Result<ParamBlock> {
        let lead = format!("{prefix}/");
        let mut shapes = Vec::new();
        let mut data = Vec::new();
        for t in &self.tensors {
            if let Some(rest) = t.name.strip_prefix(&lead) {
                shapes.push((rest.to_string(), t.rows, t.cols));
                data.extend_from_slice(&self.data[t.offset..t.offset + t.len()]);
            }
        }
        if shapes.is_empty() {
            return Err(Error::Parse(format!("no tensors with prefix `{prefix}`")));
        }
        ParamBlock::from_parts(&shapes, data)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn mlp_init(spec: &MlpSpec) -> Result<ParamBlock> {
    spec.validate()?;
    let mut shapes = Vec::new();
    for (l, &out) in spec.layer_dims.iter().enumerate() {
        shapes.push((format!("layer{l}.weight"), spec.fan_in(l), out));
        shapes.push((format!("layer{l}.bias"), 1, out));
    }
    let mut block = ParamBlock::zeros(&shapes);
    let mut rng = stream_rng(spec.init_seed, 0x4e4e);
    for l in 0..spec.layer_dims.len() {
        let (fan_in, fan_out) = (spec.fan_in(l), spec.layer_dims[l]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = block.tensor_at_mut(2 * l);
        for v in w.iter_mut() {
            *v = uniform(&mut rng, -limit, limit);
        }
    }
    Ok(block)
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// A dense network. Every mutable access to the parameters invalidates
/// previously produced caches.
#[derive(Debug)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamBlock,
    id: u64,
    generation: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            params: self.params.clone(),
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

/// Activations saved by [`Mlp::forward`].
#[derive(Clone, Debug)]
pub struct MlpCache {
    model: u64,
    generation: u64,
    input: DMatrix<f64>,
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("at least one layer")
    }
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        let params = mlp_init(&spec)?;
        Ok(Self::wrap(spec, params))
    }

    pub fn from_params(spec: MlpSpec, params: ParamBlock) -> Result<Self> {
        let expected = mlp_init(&MlpSpec { init_seed: 0, ..spec.clone() })?;
        if !expected.same_layout(&params) {
            return Err(Error::Shape("parameters do not match the network layout".into()));
        }
        Ok(Self::wrap(spec, params))
    }

    fn wrap(spec: MlpSpec, params: ParamBlock) -> Self {
        Self { spec, params, id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed), generation: 0 }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamBlock {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamBlock {
        self.generation += 1;
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn layer(&self, l: usize, h: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let w = self.params.tensor_at(2 * l);
        let b = self.params.tensor_at(2 * l + 1);
        let mut z = h * w;
        for mut row in z.row_iter_mut() {
            row += &b;
        }
        let act = self.spec.activations[l];
        let out = z.map(|v| act.apply(v));
        (z, out)
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Outputs for a batch (one sample per row) plus the cache for backward.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, MlpCache)> {
        self.check_input(x)?;
        let n_layers = self.spec.layer_dims.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post: Vec<DMatrix<f64>> = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (z, h) = self.layer(l, if l == 0 { x } else { &post[l - 1] });
            pre.push(z);
            post.push(h);
        }
        let out = post[n_layers - 1].clone();
        let cache = MlpCache { model: self.id, generation: self.generation, input: x.clone(), pre, post };
        Ok((out, cache))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in 0..self.spec.layer_dims.len() {
            h = self.layer(l, &h).1;
        }
        Ok(h)
    }

    /// Parameter gradients and input gradient for `upstream = dL/d output`.
    pub fn backward(&self, cache: &MlpCache, upstream: &DMatrix<f64>) -> Result<(ParamBlock, DMatrix<f64>)> {
        if cache.model != self.id || cache.generation != self.generation {
            return Err(Error::StaleCache(format!(
                "cache from model {} generation {}, network is model {} generation {}",
                cache.model, cache.generation, self.id, self.generation
            )));
        }
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, output is {}x{}",
                upstream.nrows(),
                upstream.ncols(),
                out.nrows(),
                out.ncols()
            )));
        }
        let mut grads = self.params.zeros_like();
        let mut delta = upstream.clone();
        for l in (0..self.spec.layer_dims.len()).rev() {
            let act = self.spec.activations[l];
            if act != Activation::Identity {
                let (z, h) = (&cache.pre[l], &cache.post[l]);
                for ((d, &zv), &hv) in delta.iter_mut().zip(z.iter()).zip(h.iter()) {
                    *d *= act.derivative(zv, hv);
                }
            }
            let input = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            grads.tensor_at_mut(2 * l).copy_from(&(input.transpose() * &delta));
            let mut gb = grads.tensor_at_mut(2 * l + 1);
            for j in 0..delta.ncols() {
                gb[(0, j)] = delta.column(j).sum();
            }
            delta = &delta * self.params.tensor_at(2 * l).transpose();
        }
        Ok((grads, delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::BoxMuller;

    fn batch(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 3);
        let mut g = BoxMuller::new();
        DMatrix::from_fn(rows, cols, |_, _| g.sample(&mut rng))
    }

    #[test]
    fn biases_start_at_zero_and_init_is_seeded() {
        let spec = MlpSpec::new(3, vec![5, 2], vec![Activation::Tanh, Activation::Identity], 11);
        let p = mlp_init(&spec).unwrap();
        assert!(p.tensor("layer0.bias").unwrap().iter().all(|&v| v == 0.0));
        assert!(p.tensor("layer1.bias").unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(p, mlp_init(&spec).unwrap());
        let other = mlp_init(&MlpSpec { init_seed: 12, ..spec }).unwrap();
        assert_ne!(p, other);
    }

    #[test]
    fn glorot_weights_are_centered_and_bounded() {
        let spec = MlpSpec::new(64, vec![64], vec![Activation::Tanh], 5);
        let p = mlp_init(&spec).unwrap();
        let w = p.tensor("layer0.weight").unwrap();
        let limit = (6.0f64 / 128.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(w.mean().abs() < 0.02);
    }

    #[test]
    fn empty_spec_is_rejected() {
        assert!(mlp_init(&MlpSpec::new(3, vec![], vec![], 0)).is_err());
        assert!(Mlp::new(MlpSpec::new(3, vec![2], vec![], 0)).is_err());
    }

    #[test]
    fn identity_network_passes_input_through() {
        let mut net = Mlp::new(MlpSpec::affine(3, 3, 0)).unwrap();
        net.params_mut().tensor_mut("layer0.weight").unwrap().fill_with_identity();
        let x = batch(4, 3, 1);
        assert_eq!(net.forward(&x).unwrap().0, x);
    }

    #[test]
    fn tanh_unit_at_zero() {
        let mut net = Mlp::new(MlpSpec::new(1, vec![1], vec![Activation::Tanh], 0)).unwrap();
        net.params_mut().as_mut_slice()[0] = 1.0;
        let out = net.predict(&DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(out[(0, 0)], 0.0);
    }

    #[test]
    fn forward_matches_row_by_row_evaluation() {
        let spec = MlpSpec::new(4, vec![6, 3], vec![Activation::Relu, Activation::Sigmoid], 2);
        let net = Mlp::new(spec).unwrap();
        let x = batch(5, 4, 2);
        let out = net.forward(&x).unwrap().0;
        let p = net.params();
        let (w0, b0, w1, b1) = (
            p.tensor("layer0.weight").unwrap(),
            p.tensor("layer0.bias").unwrap(),
            p.tensor("layer1.weight").unwrap(),
            p.tensor("layer1.bias").unwrap(),
        );
        for r in 0..5 {
            let mut h = [0.0; 6];
            for j in 0..6 {
                let mut s = b0[(0, j)];
                for i in 0..4 {
                    s += x[(r, i)] * w0[(i, j)];
                }
                h[j] = s.max(0.0);
            }
            for k in 0..3 {
                let mut s = b1[(0, k)];
                for j in 0..6 {
                    s += h[j] * w1[(j, k)];
                }
                assert!((out[(r, k)] - 1.0 / (1.0 + (-s).exp())).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stale_and_foreign_caches_are_rejected() {
        let mut net = Mlp::new(MlpSpec::affine(2, 1, 0)).unwrap();
        let other = Mlp::new(MlpSpec::affine(2, 1, 0)).unwrap();
        let x = batch(3, 2, 4);
        let (_, cache) = net.forward(&x).unwrap();
        let up = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(other.backward(&cache, &up), Err(Error::StaleCache(_))));
        net.params_mut().as_mut_slice()[0] += 1.0;
        assert!(matches!(net.backward(&cache, &up), Err(Error::StaleCache(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(MlpSpec::new(3, vec![4, 2], vec![Activation::Tanh, Activation::Identity], 1)).unwrap();
        let (out, cache) = net.forward(&batch(6, 3, 5)).unwrap();
        let (g, gx) = net.backward(&cache, &DMatrix::zeros(out.nrows(), out.ncols())).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_mse_gradient_matches_hand_formula() {
        let net = Mlp::new(MlpSpec::affine(3, 1, 8)).unwrap();
        let x = batch(10, 3, 6);
        let y = batch(10, 1, 7);
        let (pred, cache) = net.forward(&x).unwrap();
        let up = (&pred - &y) * (2.0 / 10.0);
        let (g, _) = net.backward(&cache, &up).unwrap();
        let w = net.params().tensor("layer0.weight").unwrap().into_owned();
        let expected = x.transpose() * (&x * &w - &y) * (2.0 / 10.0);
        assert!((g.tensor("layer0.weight").unwrap() - expected).norm() < 1e-8);
    }

    #[test]
    fn prefixed_concat_round_trips() {
        let a = mlp_init(&MlpSpec::affine(2, 3, 1)).unwrap();
        let b = mlp_init(&MlpSpec::affine(3, 1, 2)).unwrap();
        let joined = ParamBlock::concat_prefixed(&[("phi", &a), ("head", &b)]);
        assert_eq!(joined.extract_prefixed("phi").unwrap(), a);
        assert_eq!(joined.extract_prefixed("head").unwrap(), b);
        assert_eq!(joined.name_at(a.len()), "head/layer0.weight");
    }
}
