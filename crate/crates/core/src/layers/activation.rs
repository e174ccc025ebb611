use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct ReluCache<T> {
    input: Tensor<T>,
}

pub fn relu<T: Real>(input: &Tensor<T>) -> (Tensor<T>, ReluCache<T>) {
    let out = input.map(|v| if v > T::zero() { v } else { T::zero() });
    (out, ReluCache { input: input.clone() })
}

/// Passes upstream through where the input was strictly positive.
pub fn relu_backward<T: Real>(cache: &ReluCache<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.shape() != cache.input.shape() {
        return Err(Error::shape("relu_backward", cache.input.shape(), upstream.shape()));
    }
    let data = cache
        .input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(upstream.shape(), data)
}
