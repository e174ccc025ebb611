use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Padding, DEFAULT_EPSILON, DEFAULT_MOMENTUM};

/// One entry in the ordered layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize },
    MaxPool,
    Relu,
    Flatten,
    Dense { units: usize },
    BatchNorm { epsilon: f64, momentum: f64 },
    Dropout { rate: f64 },
    Softmax,
}

impl LayerSpec {
    pub fn conv(filters: usize) -> Self {
        LayerSpec::Conv { filters, kernel: 3 }
    }

    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm {
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        }
    }
}

/// Filter counts of the six convolution blocks of the full classifier.
pub const DEFAULT_CONV_FILTERS: [usize; 6] = [32, 64, 64, 64, 64, 64];
pub const DEFAULT_DENSE_UNITS: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[height, width, channels]` of one input image.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub padding: Padding,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerCounts {
    pub conv: usize,
    pub pool: usize,
    pub dense: usize,
    pub batch_norm: usize,
    pub dropout: usize,
    pub flatten: usize,
    pub relu: usize,
    pub softmax: usize,
}

impl ModelSpec {
    /// The six-block classifier on 256x256 RGB input: conv/ReLU/pool x6,
    /// flatten, dense-64 + ReLU, batch norm, dropout 0.1, dense-C, softmax.
    pub fn standard(num_classes: usize) -> Self {
        Self::stack(
            256,
            &DEFAULT_CONV_FILTERS,
            DEFAULT_DENSE_UNITS,
            DEFAULT_DROPOUT,
            num_classes,
        )
    }

    /// Same layer pattern with a configurable input size and conv stack,
    /// for small inputs and cheap tests.
    pub fn stack(
        input_size: usize,
        conv_filters: &[usize],
        dense_units: usize,
        dropout: f64,
        num_classes: usize,
    ) -> Self {
        let mut layers = Vec::new();
        for &f in conv_filters {
            layers.extend([LayerSpec::conv(f), LayerSpec::Relu, LayerSpec::MaxPool]);
        }
        layers.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { units: dense_units },
            LayerSpec::Relu,
            LayerSpec::batch_norm(),
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::Dense { units: num_classes },
            LayerSpec::Softmax,
        ]);
        ModelSpec {
            input_shape: [input_size, input_size, 3],
            num_classes,
            padding: Padding::Valid,
            layers,
        }
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn counts(&self) -> LayerCounts {
        let mut c = LayerCounts::default();
        for l in &self.layers {
            match l {
                LayerSpec::Conv { .. } => c.conv += 1,
                LayerSpec::MaxPool => c.pool += 1,
                LayerSpec::Relu => c.relu += 1,
                LayerSpec::Flatten => c.flatten += 1,
                LayerSpec::Dense { .. } => c.dense += 1,
                LayerSpec::BatchNorm { .. } => c.batch_norm += 1,
                LayerSpec::Dropout { .. } => c.dropout += 1,
                LayerSpec::Softmax => c.softmax += 1,
            }
        }
        c
    }

    /// Per-sample output shape after every layer. Fails if the input is too
    /// small for the conv/pool chain or the layer order is inconsistent.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        if self.input_shape.contains(&0) {
            return Err(Error::InvalidShape(self.input_shape.to_vec()));
        }
        match self.layers.as_slice() {
            [.., LayerSpec::Dense { units }, LayerSpec::Softmax] if *units == self.num_classes => {}
            _ => {
                return Err(Error::invalid(format!(
                    "layer stack must end with dense({}) followed by softmax",
                    self.num_classes
                )))
            }
        }

        let mut shape = self.input_shape.to_vec();
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |what: &str| Error::invalid(format!("layer {i} ({layer:?}): {what}, input {shape:?}"));
            shape = match *layer {
                LayerSpec::Conv { filters, kernel } => {
                    if shape.len() != 3 || filters == 0 || kernel == 0 {
                        return Err(bad("conv needs an image input and positive extents"));
                    }
                    let pad = match self.padding {
                        Padding::Valid => 0,
                        Padding::Same if kernel % 2 == 1 => kernel / 2,
                        Padding::Same => return Err(bad("same padding needs an odd kernel")),
                    };
                    if shape[0] + 2 * pad < kernel || shape[1] + 2 * pad < kernel {
                        return Err(bad("input smaller than the kernel"));
                    }
                    vec![
                        shape[0] + 2 * pad - kernel + 1,
                        shape[1] + 2 * pad - kernel + 1,
                        filters,
                    ]
                }
                LayerSpec::MaxPool => {
                    if shape.len() != 3 || shape[0] < 2 || shape[1] < 2 {
                        return Err(bad("pooling needs an image of at least 2x2"));
                    }
                    vec![shape[0] / 2, shape[1] / 2, shape[2]]
                }
                LayerSpec::Flatten => {
                    if shape.len() != 3 {
                        return Err(bad("flatten needs an image input"));
                    }
                    vec![shape.iter().product()]
                }
                LayerSpec::Dense { units } => {
                    if shape.len() != 1 || units == 0 {
                        return Err(bad("dense needs a flat input and units >= 1"));
                    }
                    vec![units]
                }
                LayerSpec::BatchNorm { epsilon, momentum } => {
                    if shape.len() != 1 {
                        return Err(bad("batch norm is applied to flat features"));
                    }
                    if epsilon <= 0.0 || !(0.0..1.0).contains(&momentum) {
                        return Err(bad("batch norm needs epsilon > 0 and momentum in [0,1)"));
                    }
                    shape
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(bad("dropout rate outside [0, 1)"));
                    }
                    shape
                }
                LayerSpec::Relu => shape,
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(bad("softmax must be the last layer"));
                    }
                    shape
                }
            };
            chain.push(shape.clone());
        }
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_chain().map(|_| ())
    }
}
