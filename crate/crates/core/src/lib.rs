//! A small convolutional-network engine for leaf image classification:
//! NHWC tensors, hand-written layers with analytic gradients, three
//! first-order optimizers, an image preprocessing and augmentation pipeline,
//! and a deterministic training loop with checkpoints.

pub mod data;
pub mod error;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Precision, Real, Tensor};
