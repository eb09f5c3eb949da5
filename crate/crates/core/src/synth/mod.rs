//! Synthetic tasks with a noisy annotator, privileged-feature encoders and a
//! conditional mutual information estimator.

mod cmi;
mod dataset;
mod encoders;
mod tasks;

pub use cmi::{estimate_cmi, CmiEstimate, DEFAULT_BINS};
pub use dataset::{fmt_f64, Dataset, Label, LabelKind, Latent, PiTriplet};
pub use encoders::{encode_one_hot, encode_quantile, OneHotEncoder, QuantileEncoder};
pub use tasks::{
    clean_signal, gen_classification, gen_het_mixture, gen_regression, het_mixture_moments, oracle_classifier,
    true_marginal_regression, ClassificationOracle, ClassificationTaskSpec, HetMixtureSpec, RegressionTaskSpec,
};
