//! A desk-scale differentiable architecture search space.
//!
//! Each mixed layer holds a set of candidate operations and a vector of
//! architecture logits; the layer output is the softmax-weighted sum of the
//! candidate outputs. Discretization keeps the argmax op per layer.

mod arch;
mod model;
mod train;

pub use arch::{parse_arch, DiscreteArch, OpKind};
pub use model::{
    arch_leaf, arch_logits_init, bias_leaf, discrete_logits, encoder_weights_init, head_bias_leaf,
    head_weight_leaf, mixed_hidden, mixed_logits, weight_leaf, MixedSpec, ModelGraph, ModelParams,
    STANDARD_OPS,
};
pub use train::{accuracy, train_discrete, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NasError {
    #[error("malformed architecture line: `{0}`")]
    MalformedLine(String),
    #[error("unknown op kind `{0}`")]
    UnknownOp(String),
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error(transparent)]
    Ad(#[from] tensor_ad::AdError),
}

pub type Result<T> = std::result::Result<T, NasError>;
