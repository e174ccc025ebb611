//! Forward and backward passes for every layer type in the classifier.
//!
//! Each layer is a pair of free functions: the forward pass returns its output
//! together with a cache, and the backward pass turns that cache plus the
//! upstream gradient into [`LayerGradients`].

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod flatten;
mod init;
mod pool;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub use activation::{relu, relu_backward, ReluCache};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, BatchNormCache, BatchNormParams, DEFAULT_EPSILON,
    DEFAULT_MOMENTUM,
};
pub(crate) use conv::conv2d_param_grads;
pub use conv::{conv2d_backward, conv2d_forward, ConvCache, ConvParams, Padding};
pub use dense::{dense_backward, dense_forward, DenseCache, DenseParams};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use flatten::{flatten, flatten_backward, FlattenCache};
pub use init::he_uniform;
pub use pool::{maxpool2d_backward, maxpool2d_forward, PoolCache};

/// Train mode uses batch statistics and active dropout; infer mode uses
/// running statistics and identity dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Gradients produced by a backward pass. `params` follows the parameter
/// order of the layer (kernels then bias, weights then bias, gamma then beta).
#[derive(Debug, Clone)]
pub struct LayerGradients<T> {
    pub input: Tensor<T>,
    pub params: Vec<Tensor<T>>,
}
