//! SGD with momentum, RMSprop and Adam.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd-momentum")]
    SgdMomentum,
    #[serde(rename = "rmsprop")]
    RmsProp,
    #[serde(rename = "adam")]
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::SgdMomentum, OptimizerKind::RmsProp, OptimizerKind::Adam];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::SgdMomentum => "sgd-momentum",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown optimizer '{s}' (valid: sgd-momentum, rmsprop, adam)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub family: OptimizerKind,
    pub learning_rate: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    /// RMSprop decay of the squared-gradient average.
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            family: OptimizerKind::Adam,
            learning_rate: 0.001,
            momentum: 0.9,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

impl OptimizerConfig {
    pub fn new(family: OptimizerKind) -> Self {
        OptimizerConfig {
            family,
            ..Default::default()
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted so a step can be checked to be a no-op
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("rho", self.rho),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::invalid(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Per-parameter moment buffers, each shaped like its parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamBuffers<T> {
    Momentum { velocity: Tensor<T> },
    RmsProp { square_avg: Tensor<T> },
    Adam { m: Tensor<T>, v: Tensor<T> },
}

impl<T: Real> ParamBuffers<T> {
    fn zeros(kind: OptimizerKind, shape: &[usize]) -> Result<Self> {
        Ok(match kind {
            OptimizerKind::SgdMomentum => ParamBuffers::Momentum {
                velocity: Tensor::zeros(shape)?,
            },
            OptimizerKind::RmsProp => ParamBuffers::RmsProp {
                square_avg: Tensor::zeros(shape)?,
            },
            OptimizerKind::Adam => ParamBuffers::Adam {
                m: Tensor::zeros(shape)?,
                v: Tensor::zeros(shape)?,
            },
        })
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        match self {
            ParamBuffers::Momentum { velocity } => vec![velocity],
            ParamBuffers::RmsProp { square_avg } => vec![square_avg],
            ParamBuffers::Adam { m, v } => vec![m, v],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            ParamBuffers::Momentum { velocity } => vec![velocity],
            ParamBuffers::RmsProp { square_avg } => vec![square_avg],
            ParamBuffers::Adam { m, v } => vec![m, v],
        }
    }

    fn shape(&self) -> &[usize] {
        self.tensors()[0].shape()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    /// Number of applied steps.
    pub step: u64,
    pub buffers: Vec<ParamBuffers<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, shapes: &[&[usize]]) -> Result<Self> {
        Ok(OptimizerState {
            step: 0,
            buffers: shapes
                .iter()
                .map(|s| ParamBuffers::zeros(kind, s))
                .collect::<Result<_>>()?,
        })
    }
}

fn check_pair<T: Real>(param: &Tensor<T>, grad: &Tensor<T>, buffer: &Tensor<T>) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != buffer.shape() {
        return Err(Error::shape("optimizer step", param.shape(), grad.shape()));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// `v ← µ·v + g; w ← w − lr·v`
pub fn sgd_momentum_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    velocity: &mut Tensor<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_pair(param, grad, velocity)?;
    let (mu, lr) = (T::from_f64(cfg.momentum), T::from_f64(cfg.learning_rate));
    for ((w, &g), v) in param.data_mut().iter_mut().zip(grad.data()).zip(velocity.data_mut()) {
        *v = mu * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}

/// `s ← ρ·s + (1−ρ)·g²; w ← w − lr·g/(√s + eps)`
pub fn rmsprop_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    square_avg: &mut Tensor<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_pair(param, grad, square_avg)?;
    let rho = T::from_f64(cfg.rho);
    let (lr, eps) = (T::from_f64(cfg.learning_rate), T::from_f64(cfg.eps));
    for ((w, &g), s) in param.data_mut().iter_mut().zip(grad.data()).zip(square_avg.data_mut()) {
        *s = rho * *s + (T::one() - rho) * g * g;
        *w -= lr * g / (s.sqrt() + eps);
    }
    Ok(())
}

/// Adam with bias correction. `step` is the 1-based index of this update.
pub fn adam_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    m: &mut Tensor<T>,
    v: &mut Tensor<T>,
    step: u64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_pair(param, grad, m)?;
    check_pair(param, grad, v)?;
    if step == 0 {
        return Err(Error::invalid("adam step index starts at 1"));
    }
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let c1 = T::from_f64(1.0 - cfg.beta1.powf(step as f64));
    let c2 = T::from_f64(1.0 - cfg.beta2.powf(step as f64));
    let (lr, eps) = (T::from_f64(cfg.learning_rate), T::from_f64(cfg.eps));
    for (((w, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// An optimizer bound to a fixed list of parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    pub state: OptimizerState<T>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(config: OptimizerConfig, shapes: &[&[usize]]) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            state: OptimizerState::new(config.family, shapes)?,
            config,
        })
    }

    pub fn from_state(config: OptimizerConfig, state: OptimizerState<T>) -> Result<Self> {
        config.validate()?;
        let consistent = state.buffers.iter().all(|b| {
            matches!(
                (config.family, b),
                (OptimizerKind::SgdMomentum, ParamBuffers::Momentum { .. })
                    | (OptimizerKind::RmsProp, ParamBuffers::RmsProp { .. })
                    | (OptimizerKind::Adam, ParamBuffers::Adam { .. })
            )
        });
        if !consistent {
            return Err(Error::Incompatible(format!(
                "optimizer buffers do not belong to {}",
                config.family
            )));
        }
        Ok(Optimizer { config, state })
    }

    /// Applies one update to every parameter. All gradients are validated
    /// before anything is written, so a failed step leaves params and state
    /// untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.state.buffers.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} parameters but got {} params / {} grads",
                self.state.buffers.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), b) in params.iter().zip(grads).zip(&self.state.buffers) {
            if p.shape() != g.shape() || p.shape() != b.shape() {
                return Err(Error::shape("optimizer step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite("gradient"));
            }
        }

        self.state.step += 1;
        let step = self.state.step;
        let cfg = self.config;
        for ((p, g), b) in params.iter_mut().zip(grads).zip(&mut self.state.buffers) {
            match b {
                ParamBuffers::Momentum { velocity } => sgd_momentum_step(p, g, velocity, &cfg)?,
                ParamBuffers::RmsProp { square_avg } => rmsprop_step(p, g, square_avg, &cfg)?,
                ParamBuffers::Adam { m, v } => adam_step(p, g, m, v, step, &cfg)?,
            }
        }
        Ok(())
    }
}
