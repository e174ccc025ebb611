use rand::Rng;

use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// He-uniform initialisation: samples from `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn he_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor<T>> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-bound..bound)))
}
