//! Diagonal Gaussian logit noise averaged over Monte-Carlo softmax samples.
//! A simplified stand-in for low-rank heteroscedastic classification heads.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nn::{sigmoid, softmax_rows, softplus};
use crate::rng::{stream_rng, BoxMuller};

pub const HET_MC_SAMPLES: usize = 100;
/// Stream for the fixed noise used at prediction time.
pub const HET_PREDICT_SEED: u64 = 0x4e7_5eed;

/// `samples` standard-normal matrices of the given shape.
pub fn logit_noise(rows: usize, cols: usize, samples: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = stream_rng(seed, 0x4e70);
    let mut g = BoxMuller::new();
    (0..samples).map(|_| DMatrix::from_fn(rows, cols, |_, _| g.sample(&mut rng))).collect()
}

/// Average of `softmax(z + softplus(r) * e_s)` over the noise draws.
pub fn het_probs(logits: &DMatrix<f64>, raw_scale: &DMatrix<f64>, noise: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    check(logits, raw_scale, noise)?;
    let scale = raw_scale.map(softplus);
    let mut acc = DMatrix::zeros(logits.nrows(), logits.ncols());
    for e in noise {
        acc += softmax_rows(&(logits + scale.component_mul(e)));
    }
    Ok(acc / noise.len() as f64)
}

fn check(logits: &DMatrix<f64>, raw_scale: &DMatrix<f64>, noise: &[DMatrix<f64>]) -> Result<()> {
    if logits.shape() != raw_scale.shape() {
        return Err(Error::Shape("logit and scale heads disagree in shape".into()));
    }
    if noise.is_empty() || noise.iter().any(|e| e.shape() != logits.shape()) {
        return Err(Error::Shape("noise draws must match the logits".into()));
    }
    Ok(())
}

/// Mean `-ln p̄_y` and gradients with respect to the logits and the raw scales.
pub fn het_ce_loss_and_grad(
    logits: &DMatrix<f64>,
    raw_scale: &DMatrix<f64>,
    labels: &[usize],
    noise: &[DMatrix<f64>],
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    check(logits, raw_scale, noise)?;
    let (rows, cols) = logits.shape();
    if labels.len() != rows || labels.iter().any(|&y| y >= cols) {
        return Err(Error::Shape("labels do not match the logits".into()));
    }
    let scale = raw_scale.map(softplus);
    let probs: Vec<DMatrix<f64>> = noise.iter().map(|e| softmax_rows(&(logits + scale.component_mul(e)))).collect();
    let s = noise.len() as f64;
    let b = rows as f64;
    let mut loss = 0.0;
    let mut dz = DMatrix::<f64>::zeros(rows, cols);
    let mut dscale = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..rows {
        let y = labels[i];
        let p_bar = probs.iter().map(|p| p[(i, y)]).sum::<f64>() / s;
        let p_bar = p_bar.max(1e-300);
        loss -= p_bar.ln();
        for (p, e) in probs.iter().zip(noise) {
            // d(-ln p̄)/d z_s = -(p_sy / (S p̄)) (onehot_y - p_s)
            let w = p[(i, y)] / (s * p_bar);
            for c in 0..cols {
                let d = w * (p[(i, c)] - if c == y { 1.0 } else { 0.0 });
                dz[(i, c)] += d;
                dscale[(i, c)] += d * e[(i, c)];
            }
        }
    }
    let draw = dscale.zip_map(raw_scale, |d, r| d * sigmoid(r) / b);
    Ok((loss / b, dz / b, draw))
}
