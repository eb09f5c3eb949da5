use nalgebra::DMatrix;

/// Identity in the forward pass, zero gradient in the backward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct StopGradient;

impl StopGradient {
    pub fn forward(&self, value: &DMatrix<f64>) -> DMatrix<f64> {
        value.clone()
    }

    pub fn backward(&self, upstream: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(upstream.nrows(), upstream.ncols())
    }
}

pub fn stop_gradient(value: &DMatrix<f64>) -> DMatrix<f64> {
    StopGradient.forward(value)
}
