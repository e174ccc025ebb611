use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct FlattenCache {
    shape: Vec<usize>,
}

/// `[n, h, w, c] -> [n, h*w*c]`, row-major per sample.
pub fn flatten<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, FlattenCache)> {
    let shape = input.shape();
    if shape.len() != 4 {
        return Err(Error::invalid(format!("flatten expects rank 4, got shape {shape:?}")));
    }
    let out = input.reshape(&[shape[0], shape[1..].iter().product()])?;
    Ok((out, FlattenCache { shape: shape.to_vec() }))
}

pub fn flatten_backward<T: Real>(cache: &FlattenCache, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.reshape(&cache.shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_layout_and_inverse() {
        let x = Tensor::new(&[1, 2, 2, 1], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (y, cache) = flatten(&x).unwrap();
        assert_eq!(y.shape(), &[1, 4]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(flatten_backward(&cache, &y).unwrap(), x);

        let x = Tensor::<f32>::zeros(&[5, 2, 2, 64]).unwrap();
        assert_eq!(flatten(&x).unwrap().0.shape(), &[5, 256]);
        assert!(flatten(&Tensor::<f32>::zeros(&[2, 3]).unwrap()).is_err());
    }
}
