//! Learning with privileged information: linear risk analysis, a small
//! neural network engine, two-head transfer-and-marginalize training,
//! synthetic data and theory checks.

pub mod error;
pub mod kv;
pub mod linear_risk;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod theory;
pub mod tram;

pub use error::{Error, Result};
