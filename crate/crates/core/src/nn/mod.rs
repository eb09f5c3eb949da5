//! A small dense-network engine: layers with reverse-mode gradients,
//! stop-gradient, Adam and the losses used for training.

mod adam;
mod loss;
mod mlp;
mod serialize;
mod stop_gradient;

pub use adam::{AdamConfig, AdamState};
pub use loss::{log_softmax_rows, loss_and_grad, softmax_rows, variance_from_raw, LossKind, Targets, VARIANCE_FLOOR};
pub use mlp::{mlp_init, sigmoid, softplus, Activation, Mlp, MlpCache, MlpSpec, ParamBlock, TensorInfo};
pub use serialize::{load_params, read_params, save_params, write_params};
pub use stop_gradient::{stop_gradient, StopGradient};
