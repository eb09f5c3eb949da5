//! Plug-in estimate of `I(y; a | x)` from equal-width histograms.

use std::collections::HashMap;

use super::dataset::{Dataset, LabelKind};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 20;
const MIN_PER_X_BIN: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmiEstimate {
    /// Nats.
    pub value: f64,
    /// Fewer than 10 samples per x-bin on average.
    pub sparse: bool,
}

fn equal_width(values: &[f64], bins: usize) -> Vec<usize> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    values
        .iter()
        .map(|&v| if width > 0.0 { (((v - lo) / width * bins as f64) as usize).min(bins - 1) } else { 0 })
        .collect()
}

/// `a` is treated as discrete (each distinct encoded vector is one value).
/// Class labels use one bin per class and ignore `bins_y`.
pub fn estimate_cmi(data: &Dataset, bins_x: usize, bins_y: usize) -> Result<CmiEstimate> {
    if data.is_empty() {
        return Err(Error::Empty("no records".into()));
    }
    if bins_x == 0 || bins_y == 0 {
        return Err(Error::Config("bin counts must be positive".into()));
    }
    if data.x_dim() != 1 {
        return Err(Error::Shape("the histogram estimator needs one-dimensional x".into()));
    }
    let xs: Vec<f64> = data.records.iter().map(|r| r.x[0]).collect();
    let xb = equal_width(&xs, bins_x);
    let (yb, ny) = match data.label_kind {
        LabelKind::Class { classes } => (data.y_classes()?, classes),
        LabelKind::Real => {
            let ys: Vec<f64> = data.records.iter().map(|r| r.y.as_f64()).collect();
            (equal_width(&ys, bins_y), bins_y)
        }
    };
    let mut a_index: HashMap<Vec<u64>, usize> = HashMap::new();
    let ab: Vec<usize> = data
        .records
        .iter()
        .map(|r| {
            let key: Vec<u64> = r.a_encoded.iter().map(|v| v.to_bits()).collect();
            let next = a_index.len();
            *a_index.entry(key).or_insert(next)
        })
        .collect();
    let na = a_index.len();
    let mut joint = vec![0usize; bins_x * ny * na];
    for i in 0..data.len() {
        joint[(xb[i] * ny + yb[i]) * na + ab[i]] += 1;
    }
    let total = data.len() as f64;
    let mut value = 0.0;
    for x in 0..bins_x {
        let cell = |y: usize, a: usize| joint[(x * ny + y) * na + a] as f64;
        let n_x: f64 = (0..ny).flat_map(|y| (0..na).map(move |a| (y, a))).map(|(y, a)| cell(y, a)).sum();
        if n_x == 0.0 {
            continue;
        }
        let n_xy: Vec<f64> = (0..ny).map(|y| (0..na).map(|a| cell(y, a)).sum()).collect();
        let n_xa: Vec<f64> = (0..na).map(|a| (0..ny).map(|y| cell(y, a)).sum()).collect();
        for y in 0..ny {
            for a in 0..na {
                let c = cell(y, a);
                if c > 0.0 {
                    value += c / total * (c * n_x / (n_xy[y] * n_xa[a])).ln();
                }
            }
        }
    }
    Ok(CmiEstimate { value, sparse: total / (bins_x as f64) < MIN_PER_X_BIN })
}
