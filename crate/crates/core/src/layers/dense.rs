use super::LayerGradients;
use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn_acc, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    /// `[in_features, out_features]`
    pub weights: Tensor<T>,
    /// `[out_features]`
    pub bias: Tensor<T>,
}

impl<T: Real> DenseParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(Error::shape("dense params", weights.shape(), bias.shape()));
        }
        Ok(DenseParams { weights, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Tensor<T>,
}

/// `out = input · W + bias`.
pub fn dense_forward<T: Real>(input: &Tensor<T>, params: &DenseParams<T>) -> Result<(Tensor<T>, DenseCache<T>)> {
    if input.rank() != 2 || input.shape()[1] != params.in_features() {
        return Err(Error::shape("dense_forward", input.shape(), params.weights.shape()));
    }
    let (n, f_in, f_out) = (input.shape()[0], params.in_features(), params.out_features());
    let mut out = vec![T::zero(); n * f_out];
    gemm_nn(input.data(), params.weights.data(), &mut out, n, f_in, f_out);
    for row in out.chunks_mut(f_out) {
        for (o, &b) in row.iter_mut().zip(params.bias.data()) {
            *o += b;
        }
    }
    Ok((Tensor::new(&[n, f_out], out)?, DenseCache { input: input.clone() }))
}

/// `dW = inputᵀ · up`, `dbias = Σ_rows up`, `dinput = up · Wᵀ`.
pub fn dense_backward<T: Real>(
    cache: &DenseCache<T>,
    params: &DenseParams<T>,
    upstream: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    let (n, f_in, f_out) = (cache.input.shape()[0], params.in_features(), params.out_features());
    if upstream.shape() != [n, f_out] {
        return Err(Error::shape("dense_backward", &[n, f_out], upstream.shape()));
    }
    let mut d_w = vec![T::zero(); f_in * f_out];
    gemm_tn_acc(cache.input.data(), upstream.data(), &mut d_w, n, f_in, f_out);
    let mut d_in = vec![T::zero(); n * f_in];
    gemm_nt(upstream.data(), params.weights.data(), &mut d_in, n, f_out, f_in);
    Ok(LayerGradients {
        input: Tensor::new(&[n, f_in], d_in)?,
        params: vec![Tensor::new(&[f_in, f_out], d_w)?, upstream.sum_axis(0)?],
    })
}
