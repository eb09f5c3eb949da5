//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use tramlab_core::linear_risk::{CovModel, FixedDesign, LinearGenerator, MeanModel};
use tramlab_core::rng::{stream_rng, BoxMuller};
use tramlab_core::Result;

pub fn gaussian_batch(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 11);
    let mut g = BoxMuller::new();
    DMatrix::from_fn(rows, cols, |_, _| g.sample(&mut rng))
}

/// The d=5, m=2, n=200 instance with a linear PI mean.
pub fn linear_instance(seed: u64) -> Result<(FixedDesign, LinearGenerator)> {
    let design = FixedDesign::gaussian(200, 5, 2, seed)?;
    let gen = LinearGenerator::new(
        DVector::from_column_slice(&[1.0, -0.5, 0.25, 2.0, 0.0]),
        DVector::from_column_slice(&[1.5, -1.0]),
        0.5,
        MeanModel::Linear(gaussian_batch(2, 5, seed + 1) * 0.5),
        CovModel::Isotropic(1.0),
    )?;
    Ok((design, gen))
}
