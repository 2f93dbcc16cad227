//! Small differentiable-network kernel: dense and convolutional layers, instance and
//! layer normalization, ELU/Tanh activations, hand-written backpropagation and Adam.
//!
//! Everything runs one sample at a time in `f64`; learners loop over their minibatch and
//! accumulate gradients.

mod adam;
mod codec;
mod layer;
mod network;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use codec::{deserialize_params, serialize_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use layer::{LayerSpec, NORM_EPS};
pub use network::{backward, backward_params, forward, predict, ForwardCache, LayerParams, NetworkParams, NetworkSpec};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch at layer {layer}: {detail}")]
    ShapeMismatch { layer: usize, detail: String },
    #[error("parameters do not match network: {0}")]
    ParamMismatch(String),
    #[error("missing or mismatched forward cache: {0}")]
    MissingCache(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("corrupt parameter payload at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },
}

#[cfg(test)]
mod tests;
