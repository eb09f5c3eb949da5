//! Fixed-design linear regression with privileged features.

mod estimators;
mod generator;
mod risk;

pub use estimators::{
    fit_for_kind, fit_joint, fit_joint_blockwise, fit_no_pi, hstack, predict, projector, BlockOperators, EstimatorKind,
    FittedParams, LeastSquares, PredictContext, TrainingDraw, RANK_TOLERANCE,
};
pub use generator::{
    sample_pi, sample_targets, CovFn, CovModel, FixedDesign, LinearGenerator, MeanFn, MeanModel, PSD_TOLERANCE,
};
pub use risk::{
    check_proposition, check_proposition_with, inner_seed_for, mean_stderr, risk_closed_form, risk_mc,
    sherman_morrison_bound, BoundVariant, NormBound, Proposition, PropositionCheck, RiskEstimate, RiskLab,
    DEFAULT_N_INNER, MIN_MC_REPS,
};
