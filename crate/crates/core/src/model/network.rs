use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, conv2d_backward, conv2d_forward, conv2d_param_grads,
    dense_backward, dense_forward, dropout, dropout_backward, flatten, flatten_backward, he_uniform,
    maxpool2d_backward, maxpool2d_forward, relu, relu_backward, BatchNormCache, BatchNormParams, ConvCache, ConvParams,
    DenseCache, DenseParams, DropoutMask, FlattenCache, Mode, PoolCache, ReluCache,
};
use crate::loss::softmax;
use crate::tensor::{Real, Tensor};

/// An instantiated layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(ConvParams<T>),
    MaxPool,
    Relu,
    Flatten,
    Dense(DenseParams<T>),
    BatchNorm(BatchNormParams<T>),
    Dropout(f64),
    Softmax,
}

/// Per-layer state saved by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Conv(ConvCache<T>),
    MaxPool(PoolCache),
    Relu(ReluCache<T>),
    Flatten(FlattenCache),
    Dense(DenseCache<T>),
    BatchNorm(BatchNormCache<T>),
    Dropout(DropoutMask<T>),
    Softmax,
}

#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// Pre-softmax scores `[n, C]`.
    pub logits: Tensor<T>,
    caches: Vec<LayerCache<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    /// He-uniform kernels and weights, zero biases, BN at identity. The
    /// initialisation depends only on `seed`.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        let chain = spec.shape_chain()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input = spec.input_shape.to_vec();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, out) in spec.layers.iter().zip(&chain) {
            layers.push(match *layer {
                LayerSpec::Conv { filters, kernel } => {
                    let c_in = input[2];
                    let k = he_uniform(&[kernel, kernel, c_in, filters], kernel * kernel * c_in, &mut rng)?;
                    Layer::Conv(ConvParams::new(k, Tensor::zeros(&[filters])?, spec.padding)?)
                }
                LayerSpec::Dense { units } => {
                    let w = he_uniform(&[input[0], units], input[0], &mut rng)?;
                    Layer::Dense(DenseParams::new(w, Tensor::zeros(&[units])?)?)
                }
                LayerSpec::BatchNorm { epsilon, momentum } => {
                    Layer::BatchNorm(BatchNormParams::new(input[0], epsilon, momentum)?)
                }
                LayerSpec::Dropout { rate } => Layer::Dropout(rate),
                LayerSpec::MaxPool => Layer::MaxPool,
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Softmax => Layer::Softmax,
            });
            input.clone_from(out);
        }
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    /// Number of trainable scalars (BN running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Trainable tensors in layer order: conv/dense `[weights, bias]`, BN
    /// `[gamma, beta]`.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(p) => out.extend([&p.kernels, &p.bias]),
                Layer::Dense(p) => out.extend([&p.weights, &p.bias]),
                Layer::BatchNorm(p) => out.extend([&p.gamma, &p.beta]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(p) => out.extend([&mut p.kernels, &mut p.bias]),
                Layer::Dense(p) => out.extend([&mut p.weights, &mut p.bias]),
                Layer::BatchNorm(p) => out.extend([&mut p.gamma, &mut p.beta]),
                _ => {}
            }
        }
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|t| t.shape().to_vec()).collect()
    }

    /// Everything that defines the model's function: trainable tensors plus
    /// BN running mean and variance, in layer order.
    pub fn state_tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(p) => out.extend([&p.kernels, &p.bias]),
                Layer::Dense(p) => out.extend([&p.weights, &p.bias]),
                Layer::BatchNorm(p) => out.extend([&p.gamma, &p.beta, &p.running_mean, &p.running_var]),
                _ => {}
            }
        }
        out
    }

    pub fn state_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(p) => out.extend([&mut p.kernels, &mut p.bias]),
                Layer::Dense(p) => out.extend([&mut p.weights, &mut p.bias]),
                Layer::BatchNorm(p) => out.extend([&mut p.gamma, &mut p.beta, &mut p.running_mean, &mut p.running_var]),
                _ => {}
            }
        }
        out
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let expected = &self.spec.input_shape;
        if input.rank() != 4 || input.shape()[1..] != expected[..] {
            let mut want = vec![input.shape().first().copied().unwrap_or(0)];
            want.extend_from_slice(expected);
            return Err(Error::shape("network input", &want, input.shape()));
        }
        Ok(())
    }

    /// Runs every layer up to (not including) the softmax and keeps the
    /// caches. Train mode updates BN running statistics and draws dropout
    /// masks from `rng`.
    pub fn forward<R: Rng + ?Sized>(&mut self, input: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<ForwardPass<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let cache = match layer {
                Layer::Conv(p) => {
                    let (y, c) = conv2d_forward(&x, p)?;
                    x = y;
                    LayerCache::Conv(c)
                }
                Layer::MaxPool => {
                    let (y, c) = maxpool2d_forward(&x)?;
                    x = y;
                    LayerCache::MaxPool(c)
                }
                Layer::Relu => {
                    let (y, c) = relu(&x);
                    x = y;
                    LayerCache::Relu(c)
                }
                Layer::Flatten => {
                    let (y, c) = flatten(&x)?;
                    x = y;
                    LayerCache::Flatten(c)
                }
                Layer::Dense(p) => {
                    let (y, c) = dense_forward(&x, p)?;
                    x = y;
                    LayerCache::Dense(c)
                }
                Layer::BatchNorm(p) => {
                    let (y, c) = batchnorm_forward(&x, p, mode)?;
                    x = y;
                    LayerCache::BatchNorm(c)
                }
                Layer::Dropout(rate) => {
                    let (y, c) = dropout(&x, *rate, mode, rng)?;
                    x = y;
                    LayerCache::Dropout(c)
                }
                Layer::Softmax => LayerCache::Softmax,
            };
            caches.push(cache);
        }
        Ok(ForwardPass { logits: x, caches })
    }

    /// Gradients of the loss for every trainable tensor, in [`Self::params`]
    /// order, given the gradient with respect to the logits.
    pub fn backward(&self, pass: &ForwardPass<T>, d_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if d_logits.shape() != pass.logits.shape() {
            return Err(Error::shape("network backward", pass.logits.shape(), d_logits.shape()));
        }
        if pass.caches.len() != self.layers.len() {
            return Err(Error::invalid("forward pass does not belong to this network"));
        }
        let mut grads: Vec<Vec<Tensor<T>>> = Vec::new();
        let mut up = d_logits.clone();
        for (i, (layer, cache)) in self.layers.iter().zip(&pass.caches).enumerate().rev() {
            up = match (layer, cache) {
                (Layer::Softmax, LayerCache::Softmax) => up,
                (Layer::Conv(p), LayerCache::Conv(c)) if i == 0 => {
                    grads.push(conv2d_param_grads(c, p, &up)?);
                    break;
                }
                (Layer::Conv(p), LayerCache::Conv(c)) => {
                    let g = conv2d_backward(c, p, &up)?;
                    grads.push(g.params);
                    g.input
                }
                (Layer::Dense(p), LayerCache::Dense(c)) => {
                    let g = dense_backward(c, p, &up)?;
                    grads.push(g.params);
                    g.input
                }
                (Layer::BatchNorm(p), LayerCache::BatchNorm(c)) => {
                    let g = batchnorm_backward(c, p, &up)?;
                    grads.push(g.params);
                    g.input
                }
                (Layer::MaxPool, LayerCache::MaxPool(c)) => maxpool2d_backward(c, &up)?,
                (Layer::Relu, LayerCache::Relu(c)) => relu_backward(c, &up)?,
                (Layer::Flatten, LayerCache::Flatten(c)) => flatten_backward(c, &up)?,
                (Layer::Dropout(_), LayerCache::Dropout(m)) => dropout_backward(m, &up)?,
                _ => return Err(Error::invalid("forward pass does not belong to this network")),
            };
        }
        Ok(grads.into_iter().rev().flatten().collect())
    }

    /// Inference-mode logits; leaves the network untouched.
    pub fn logits(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(p) => conv2d_forward(&x, p)?.0,
                Layer::MaxPool => maxpool2d_forward(&x)?.0,
                Layer::Relu => relu(&x).0,
                Layer::Flatten => flatten(&x)?.0,
                Layer::Dense(p) => dense_forward(&x, p)?.0,
                Layer::BatchNorm(p) => batchnorm_infer(&x, p)?.0,
                Layer::Dropout(_) | Layer::Softmax => x,
            };
        }
        Ok(x)
    }

    /// Inference-mode class probabilities `[n, C]`.
    pub fn predict_proba(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.logits(input)?)
    }

    /// The same network in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(p) => Layer::Conv(ConvParams {
                    kernels: p.kernels.cast(),
                    bias: p.bias.cast(),
                    padding: p.padding,
                }),
                Layer::Dense(p) => Layer::Dense(DenseParams {
                    weights: p.weights.cast(),
                    bias: p.bias.cast(),
                }),
                Layer::BatchNorm(p) => Layer::BatchNorm(BatchNormParams {
                    gamma: p.gamma.cast(),
                    beta: p.beta.cast(),
                    running_mean: p.running_mean.cast(),
                    running_var: p.running_var.cast(),
                    epsilon: U::from_f64(p.epsilon.to_f64()),
                    momentum: U::from_f64(p.momentum.to_f64()),
                }),
                Layer::Dropout(r) => Layer::Dropout(*r),
                Layer::MaxPool => Layer::MaxPool,
                Layer::Relu => Layer::Relu,
                Layer::Flatten => Layer::Flatten,
                Layer::Softmax => Layer::Softmax,
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            layers,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::cross_entropy;

    fn small() -> ModelSpec {
        ModelSpec::stack(8, &[2], 4, 0.0, 3)
    }

    #[test]
    fn standard_model_parameter_count() {
        let net = Network::<f32>::build(ModelSpec::standard(10), 0).unwrap();
        assert_eq!(net.param_count(), 184_330);
        let per_layer: Vec<usize> = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(p) => Some(p.param_count()),
                Layer::Dense(p) => Some(p.param_count()),
                Layer::BatchNorm(p) => Some(p.param_count()),
                _ => None,
            })
            .collect();
        assert_eq!(
            per_layer,
            vec![896, 18_496, 36_928, 36_928, 36_928, 36_928, 16_448, 128, 650]
        );
    }

    #[test]
    fn build_is_seeded() {
        let a = Network::<f32>::build(small(), 4).unwrap();
        assert_eq!(a, Network::build(small(), 4).unwrap());
        assert_ne!(a, Network::build(small(), 5).unwrap());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = Network::<f64>::build(small(), 1).unwrap();
        let x = Tensor::from_fn(&[5, 8, 8, 3], |i| ((i * 37) % 17) as f64 / 17.0).unwrap();
        let p = net.predict_proba(&x).unwrap();
        assert_eq!(p.shape(), &[5, 3]);
        for row in p.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(net.predict_proba(&Tensor::zeros(&[1, 7, 8, 3]).unwrap()).is_err());
    }

    #[test]
    fn gradient_list_matches_params() {
        let mut net = Network::<f64>::build(small(), 2).unwrap();
        let x = Tensor::from_fn(&[4, 8, 8, 3], |i| (i % 11) as f64 / 11.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = net.forward(&x, Mode::Train, &mut rng).unwrap();
        let (_, d) = cross_entropy(&softmax(&pass.logits).unwrap(), &[0, 1, 2, 0]).unwrap();
        let grads = net.backward(&pass, &d).unwrap();
        let shapes: Vec<Vec<usize>> = grads.iter().map(|g| g.shape().to_vec()).collect();
        assert_eq!(shapes, net.param_shapes());
    }

    #[test]
    fn infer_logits_match_infer_forward() {
        let mut net = Network::<f64>::build(ModelSpec::stack(8, &[2], 4, 0.5, 3), 2).unwrap();
        let x = Tensor::from_fn(&[3, 8, 8, 3], |i| (i % 5) as f64 / 5.0).unwrap();
        let before = net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = net.forward(&x, Mode::Infer, &mut rng).unwrap();
        assert_eq!(net, before);
        assert_eq!(pass.logits, net.logits(&x).unwrap());
    }
}
