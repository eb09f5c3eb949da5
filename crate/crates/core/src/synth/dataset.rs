//! `(x, a, y)` records and their delimited-text form.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    Real(f64),
    Class(usize),
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Real(v) => v,
            Label::Class(c) => c as f64,
        }
    }
}

/// Generator bookkeeping; never used as a model input.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Latent {
    pub is_noisy: bool,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiTriplet {
    pub x: Vec<f64>,
    pub a_raw: Vec<f64>,
    pub a_encoded: Vec<f64>,
    pub y: Label,
    pub latent: Latent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    Real,
    Class { classes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub a_raw_names: Vec<String>,
    pub label_kind: LabelKind,
    pub records: Vec<PiTriplet>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn x_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.x.len())
    }

    pub fn a_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.a_encoded.len())
    }

    fn rows(&self, f: impl Fn(&PiTriplet) -> &[f64], width: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), width, |i, j| f(&self.records[i])[j])
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        self.rows(|r| &r.x, self.x_dim())
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        self.rows(|r| &r.a_encoded, self.a_dim())
    }

    pub fn y_column(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 1, |i, _| self.records[i].y.as_f64())
    }

    pub fn y_classes(&self) -> Result<Vec<usize>> {
        self.records
            .iter()
            .map(|r| match r.y {
                Label::Class(c) => Ok(c),
                Label::Real(_) => Err(Error::ModelMismatch("dataset has real-valued labels".into())),
            })
            .collect()
    }

    /// Records at the given indices, in order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            a_raw_names: self.a_raw_names.clone(),
            label_kind: self.label_kind,
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols = Vec::new();
        if self.x_dim() == 1 {
            cols.push("x".to_string());
        } else {
            cols.extend((0..self.x_dim()).map(|i| format!("x_{i}")));
        }
        cols.extend(self.a_raw_names.iter().map(|n| format!("a_raw.{n}")));
        cols.extend((0..self.a_dim()).map(|i| format!("a_enc_{i}")));
        cols.extend(["y", "latent.is_noisy", "latent.v"].map(String::from));
        cols
    }

    /// Comma-separated export; floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header().join(","))?;
        for r in &self.records {
            let mut fields: Vec<String> = Vec::new();
            fields.extend(r.x.iter().map(|v| fmt_f64(*v)));
            fields.extend(r.a_raw.iter().map(|v| fmt_f64(*v)));
            fields.extend(r.a_encoded.iter().map(|v| fmt_f64(*v)));
            fields.push(match r.y {
                Label::Real(v) => fmt_f64(v),
                Label::Class(c) => c.to_string(),
            });
            fields.push(u8::from(r.latent.is_noisy).to_string());
            fields.push(fmt_f64(r.latent.v));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, label_kind: LabelKind) -> Result<Dataset> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let count = |pred: &dyn Fn(&str) -> bool| cols.iter().filter(|c| pred(c)).count();
        let x_dim = count(&|c| c == "x" || c.starts_with("x_"));
        let a_raw_names: Vec<String> = cols.iter().filter_map(|c| c.strip_prefix("a_raw.").map(String::from)).collect();
        let a_dim = count(&|c| c.starts_with("a_enc_"));
        let expected = x_dim + a_raw_names.len() + a_dim + 3;
        if cols.len() != expected || cols[expected - 3] != "y" {
            return Err(Error::Parse(format!("unexpected header `{header}`")));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {expected}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num =
                |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}` on row {}", lineno + 1)));
            let take =
                |from: usize, len: usize| fields[from..from + len].iter().map(|s| num(s)).collect::<Result<Vec<_>>>();
            let x = take(0, x_dim)?;
            let a_raw = take(x_dim, a_raw_names.len())?;
            let a_encoded = take(x_dim + a_raw_names.len(), a_dim)?;
            let y_text = fields[expected - 3];
            let y = match label_kind {
                LabelKind::Real => Label::Real(num(y_text)?),
                LabelKind::Class { .. } => {
                    Label::Class(y_text.parse().map_err(|_| Error::Parse(format!("bad class label `{y_text}`")))?)
                }
            };
            let is_noisy = match fields[expected - 2] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("bad noise flag `{other}`"))),
            };
            let v = num(fields[expected - 1])?;
            records.push(PiTriplet { x, a_raw, a_encoded, y, latent: Latent { is_noisy, v } });
        }
        Ok(Dataset { a_raw_names, label_kind, records })
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
