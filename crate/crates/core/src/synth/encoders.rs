//! Encoders for privileged features: one-hot for categories, quantile bins
//! for reals.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Categories in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotEncoder {
    categories: Vec<String>,
}

impl OneHotEncoder {
    pub fn fit<S: AsRef<str>>(values: &[S]) -> Self {
        let mut categories: Vec<String> = Vec::new();
        for v in values {
            if !categories.iter().any(|c| c == v.as_ref()) {
                categories.push(v.as_ref().to_string());
            }
        }
        Self { categories }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn width(&self) -> usize {
        self.categories.len()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }

    /// Unknown categories encode as an all-zero row.
    pub fn transform<S: AsRef<str>>(&self, values: &[S]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(values.len(), self.width());
        for (i, v) in values.iter().enumerate() {
            if let Some(j) = self.index_of(v.as_ref()) {
                out[(i, j)] = 1.0;
            }
        }
        out
    }
}

pub fn encode_one_hot<S: AsRef<str>>(values: &[S]) -> DMatrix<f64> {
    OneHotEncoder::fit(values).transform(values)
}

/// Equal-frequency bins learned from a training column.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileEncoder {
    edges: Vec<f64>,
    q: usize,
    /// Set when the training column was constant and a single bin is used.
    pub degenerate: bool,
}

impl QuantileEncoder {
    pub fn fit(values: &[f64], q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::Config(format!("need at least 2 quantile bins, got {q}")));
        }
        if values.len() < q {
            return Err(Error::Empty(format!("{} values cannot fill {q} bins", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("quantile encoder needs finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[sorted.len() - 1] {
            return Ok(Self { edges: Vec::new(), q: 1, degenerate: true });
        }
        let n = sorted.len();
        // Upper edge of bin i-1 is the ceil(i n / q)-th smallest value.
        let edges = (1..q).map(|i| sorted[(i * n).div_ceil(q) - 1]).collect();
        Ok(Self { edges, q, degenerate: false })
    }

    pub fn bins(&self) -> usize {
        self.q
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Values equal to an edge go to the lower bin; anything outside the
    /// training range lands in the first or last bin.
    pub fn bin(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e < value)
    }

    pub fn transform(&self, values: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(values.len(), self.q);
        for (i, &v) in values.iter().enumerate() {
            out[(i, self.bin(v))] = 1.0;
        }
        out
    }
}

pub fn encode_quantile(values: &[f64], q: usize) -> Result<(DMatrix<f64>, QuantileEncoder)> {
    let enc = QuantileEncoder::fit(values, q)?;
    Ok((enc.transform(values), enc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_basics() {
        let vals = ["b", "a", "c", "a"];
        let m = encode_one_hot(&vals);
        assert_eq!(m.ncols(), 3);
        for row in m.row_iter() {
            assert_eq!(row.sum(), 1.0);
        }
        let enc = OneHotEncoder::fit(&vals);
        assert_eq!(enc.categories(), ["b", "a", "c"]);
        for (i, v) in vals.iter().enumerate() {
            assert_eq!(m.row(i).transpose().argmax().0, enc.index_of(v).unwrap());
        }
        assert_eq!(enc.transform(&["z"]).sum(), 0.0);
        let single = encode_one_hot(&["k", "k", "k"]);
        assert_eq!(single, DMatrix::from_element(3, 1, 1.0));
    }

    #[test]
    fn deciles_of_one_to_hundred() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let (m, enc) = encode_quantile(&vals, 10).unwrap();
        for j in 0..10 {
            assert_eq!(m.column(j).sum(), 10.0);
        }
        assert_eq!(enc.bin(-5.0), 0);
        assert_eq!(enc.bin(1e9), 9);
        assert_eq!(enc.bin(10.0), 0);
        assert_eq!(enc.bin(10.5), 1);
    }

    #[test]
    fn constant_column_falls_back_to_one_bin() {
        let (m, enc) = encode_quantile(&[2.0; 20], 10).unwrap();
        assert!(enc.degenerate);
        assert_eq!(m.ncols(), 1);
        assert_eq!(m.sum(), 20.0);
    }

    #[test]
    fn bad_inputs() {
        assert!(QuantileEncoder::fit(&[1.0, 2.0], 1).is_err());
        assert!(QuantileEncoder::fit(&[1.0, 2.0], 3).is_err());
    }
}
