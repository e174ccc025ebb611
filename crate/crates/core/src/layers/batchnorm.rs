use super::{LayerGradients, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

/// Per-feature batch normalisation over `[n, features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: T,
    /// Weight of the previous running statistic in the moving average.
    pub momentum: T,
}

impl<T: Real> BatchNormParams<T> {
    /// gamma = 1, beta = 0, running mean 0, running variance 1.
    pub fn new(features: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if epsilon <= 0.0 || !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "batchnorm needs epsilon > 0 and momentum in [0,1), got {epsilon} / {momentum}"
            )));
        }
        Ok(BatchNormParams {
            gamma: Tensor::ones(&[features])?,
            beta: Tensor::zeros(&[features])?,
            running_mean: Tensor::zeros(&[features])?,
            running_var: Tensor::ones(&[features])?,
            epsilon: T::from_f64(epsilon),
            momentum: T::from_f64(momentum),
        })
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// In train mode normalises with the batch mean and biased variance and
/// folds them into the running statistics; in infer mode uses the running
/// statistics unchanged.
pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    params: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    if mode == Mode::Infer {
        return batchnorm_infer(input, params);
    }
    check_input(input, params)?;
    let (n, f) = (input.shape()[0], params.features());
    if n < 2 {
        return Err(Error::invalid(format!(
            "batchnorm in train mode needs a batch of at least 2, got {n}"
        )));
    }
    let mean = input.mean_axis(0)?.into_data();
    let mut var = vec![T::zero(); f];
    for row in input.data().chunks(f) {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let nf = T::from_usize(n);
    let var: Vec<T> = var.into_iter().map(|v| v / nf).collect();

    let mom = params.momentum;
    let keep = T::one() - mom;
    for (r, &m) in params.running_mean.data_mut().iter_mut().zip(&mean) {
        *r = mom * *r + keep * m;
    }
    for (r, &v) in params.running_var.data_mut().iter_mut().zip(&var) {
        *r = mom * *r + keep * v;
    }
    normalize(input, params, &mean, &var, Mode::Train)
}

/// Inference-mode normalisation with the running statistics.
pub fn batchnorm_infer<T: Real>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    check_input(input, params)?;
    normalize(
        input,
        params,
        params.running_mean.data(),
        params.running_var.data(),
        Mode::Infer,
    )
}

fn check_input<T: Real>(input: &Tensor<T>, params: &BatchNormParams<T>) -> Result<()> {
    if input.rank() != 2 || input.shape()[1] != params.features() {
        return Err(Error::shape("batchnorm_forward", input.shape(), params.gamma.shape()));
    }
    Ok(())
}

fn normalize<T: Real>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
    mean: &[T],
    var: &[T],
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (n, f) = (input.shape()[0], params.features());
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + params.epsilon).sqrt()).collect();
    let mut normalized = Vec::with_capacity(n * f);
    let mut out = Vec::with_capacity(n * f);
    for row in input.data().chunks(f) {
        for j in 0..f {
            let xh = (row[j] - mean[j]) * inv_std[j];
            normalized.push(xh);
            out.push(params.gamma.data()[j] * xh + params.beta.data()[j]);
        }
    }
    Ok((
        Tensor::new(&[n, f], out)?,
        BatchNormCache {
            normalized: Tensor::new(&[n, f], normalized)?,
            inv_std,
            mode,
        },
    ))
}

/// Full gradient through the batch mean and variance in train mode; in infer
/// mode the statistics are constants. `params` order is `[gamma, beta]`.
pub fn batchnorm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    params: &BatchNormParams<T>,
    upstream: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    let shape = cache.normalized.shape();
    if upstream.shape() != shape {
        return Err(Error::shape("batchnorm_backward", shape, upstream.shape()));
    }
    let (n, f) = (shape[0], shape[1]);
    let xh = cache.normalized.data();
    let up = upstream.data();
    let gamma = params.gamma.data();

    let mut d_gamma = vec![T::zero(); f];
    let mut d_beta = vec![T::zero(); f];
    for (i, &u) in up.iter().enumerate() {
        d_gamma[i % f] += u * xh[i];
        d_beta[i % f] += u;
    }

    let d_in: Vec<T> = match cache.mode {
        Mode::Infer => up
            .iter()
            .enumerate()
            .map(|(i, &u)| u * gamma[i % f] * cache.inv_std[i % f])
            .collect(),
        Mode::Train => {
            // dx = inv_std / n * (n*dxh - Σdxh - xh * Σ(dxh*xh)), dxh = up*gamma
            let nf = T::from_usize(n);
            up.iter()
                .enumerate()
                .map(|(i, &u)| {
                    let j = i % f;
                    let g = gamma[j];
                    cache.inv_std[j] / nf * (nf * u * g - d_beta[j] * g - xh[i] * d_gamma[j] * g)
                })
                .collect()
        }
    };

    Ok(LayerGradients {
        input: Tensor::new(&[n, f], d_in)?,
        params: vec![Tensor::new(&[f], d_gamma)?, Tensor::new(&[f], d_beta)?],
    })
}
