//! Transfer-and-marginalize models: the φ/ψ/w/u partition, one-step and
//! two-step training, heteroscedastic and distilled variants, baselines,
//! linear probes and metrics.

mod het;
mod metrics;
mod model;
mod predict;
mod probe;
mod train;

pub use het::{het_ce_loss_and_grad, het_probs, logit_noise, HET_MC_SAMPLES, HET_PREDICT_SEED};
pub use metrics::{
    evaluate, predict_kind, score, EvalContext, Metrics, PredictorKind, RunResult, PROB_FLOOR, RUN_CSV_HEADER,
};
pub use model::{build_tram, Psi, PsiCache, PsiWiring, Task, TramModel, TramSpec};
pub use predict::{
    pool_mean, predict_conditional, predict_full_marg, predict_impute, predict_marginal, ImputeMode, Prediction,
};
pub use probe::{linear_probe, LogisticProbe, Probe, RidgeProbe, LOGISTIC_GRAD_TOL, LOGISTIC_MAX_ITERS, PROBE_L2};
pub use train::{
    epoch_order, train_distill_no_pi, train_distilled, train_l1_only, train_no_pi, train_one_step, train_two_step,
    LossCurves, TargetData, TrainConfig, TrainData, TrainMode,
};
