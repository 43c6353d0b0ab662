//! Minimal neural-network toolkit: tensors, a reverse-mode tape, MLPs,
//! Adam, Polyak averaging, Gaussian policy heads and checkpoints.

mod adam;
mod checkpoint;
mod gaussian;
mod graph;
mod mlp;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gaussian::{
    diag_gaussian_entropy, diag_gaussian_log_prob, diag_gaussian_log_prob_row, log_tanh_jacobian, squashed_sample,
    SquashedGaussianHead, LOG_STD_MAX, LOG_STD_MIN,
};
pub use graph::{sigmoid, softplus, Gradients, Graph, Var};
pub use mlp::{param_count, polyak_params, Activation, BoundMlp, Layer, Mlp, Parameters};
pub use tensor::Tensor;
