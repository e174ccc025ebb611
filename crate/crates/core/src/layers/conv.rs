//! Stride-1 2-D cross-correlation over NHWC inputs, lowered to matrix
//! multiplication with im2col.
//!
//! For one sample the patch matrix has one row per output position and one
//! column per `(dy, dx, in_channel)` triple, which is exactly the flattened
//! row order of a `[kh, kw, in, out]` kernel. The forward pass is then a
//! single `patches · kernels` product whose `[oh*ow, out]` result is already
//! the NHWC output slab for that sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LayerGradients;
use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn_acc, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; each 3x3 kernel shrinks the spatial extent by 2.
    #[default]
    Valid,
    /// Zero padding that preserves the spatial extent (odd kernels only).
    Same,
}

impl std::str::FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::invalid(format!(
                "unknown padding '{other}' (expected valid or same)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    /// `[kh, kw, in_channels, out_channels]`
    pub kernels: Tensor<T>,
    /// `[out_channels]`
    pub bias: Tensor<T>,
    pub padding: Padding,
}

impl<T: Real> ConvParams<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, padding: Padding) -> Result<Self> {
        let ks = kernels.shape();
        if ks.len() != 4 {
            return Err(Error::invalid(format!(
                "conv kernels must be [kh, kw, in, out], got {ks:?}"
            )));
        }
        if bias.shape() != [ks[3]] {
            return Err(Error::shape("conv bias", &ks[3..], bias.shape()));
        }
        if padding == Padding::Same && (ks[0].is_multiple_of(2) || ks[1].is_multiple_of(2)) {
            return Err(Error::invalid("same padding needs odd kernel extents"));
        }
        Ok(ConvParams { kernels, bias, padding })
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[0], self.kernels.shape()[1])
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[3]
    }

    fn pads(&self) -> (usize, usize) {
        let (kh, kw) = self.kernel_size();
        match self.padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
        }
    }

    /// Spatial output extent for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel_size();
        let (ph, pw) = self.pads();
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::invalid(format!(
                "conv input {h}x{w} is smaller than the {kh}x{kw} kernel"
            )));
        }
        Ok((h + 2 * ph - kh + 1, w + 2 * pw - kw + 1))
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Tensor<T>,
}

struct Geometry {
    h: usize,
    w: usize,
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn of<T: Real>(input_shape: &[usize], params: &ConvParams<T>) -> Result<Self> {
        if input_shape.len() != 4 {
            return Err(Error::invalid(format!(
                "conv2d expects [n, h, w, c] input, got {input_shape:?}"
            )));
        }
        let (h, w, c_in) = (input_shape[1], input_shape[2], input_shape[3]);
        if c_in != params.in_channels() {
            return Err(Error::shape("conv2d channels", input_shape, params.kernels.shape()));
        }
        let (kh, kw) = params.kernel_size();
        let (ph, pw) = params.pads();
        let (oh, ow) = params.output_hw(h, w)?;
        Ok(Geometry {
            h,
            w,
            c_in,
            c_out: params.out_channels(),
            kh,
            kw,
            ph,
            pw,
            oh,
            ow,
        })
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.c_in
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Source row/column for output `(y, x)` and kernel tap `(dy, dx)`, or
    /// `None` inside the zero padding.
    #[inline]
    fn source(&self, y: usize, x: usize, dy: usize, dx: usize) -> Option<(usize, usize)> {
        let sy = (y + dy).checked_sub(self.ph).filter(|&v| v < self.h)?;
        let sx = (x + dx).checked_sub(self.pw).filter(|&v| v < self.w)?;
        Some((sy, sx))
    }

    fn im2col<T: Real>(&self, sample: &[T], col: &mut [T]) {
        let c = self.c_in;
        let patch = self.patch_len();
        for y in 0..self.oh {
            for x in 0..self.ow {
                let row = &mut col[(y * self.ow + x) * patch..][..patch];
                for dy in 0..self.kh {
                    for dx in 0..self.kw {
                        let dst = &mut row[(dy * self.kw + dx) * c..][..c];
                        match self.source(y, x, dy, dx) {
                            Some((sy, sx)) => dst.copy_from_slice(&sample[(sy * self.w + sx) * c..][..c]),
                            None => dst.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }

    fn col2im_acc<T: Real>(&self, col: &[T], sample: &mut [T]) {
        let c = self.c_in;
        let patch = self.patch_len();
        for y in 0..self.oh {
            for x in 0..self.ow {
                let row = &col[(y * self.ow + x) * patch..][..patch];
                for dy in 0..self.kh {
                    for dx in 0..self.kw {
                        if let Some((sy, sx)) = self.source(y, x, dy, dx) {
                            let src = &row[(dy * self.kw + dx) * c..][..c];
                            let dst = &mut sample[(sy * self.w + sx) * c..][..c];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out[b,y,x,o] = bias[o] + Σ in[b, y+dy-p, x+dx-p, i] · K[dy,dx,i,o]`.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
    let g = Geometry::of(input.shape(), params)?;
    let n = input.shape()[0];
    let in_len = g.h * g.w * g.c_in;
    let out_len = g.positions() * g.c_out;
    let mut out = vec![T::zero(); n * out_len];
    let kernels = params.kernels.data();
    let bias = params.bias.data();

    out.par_chunks_mut(out_len)
        .zip(input.data().par_chunks(in_len))
        .for_each(|(out_sample, in_sample)| {
            let mut col = vec![T::zero(); g.positions() * g.patch_len()];
            g.im2col(in_sample, &mut col);
            gemm_nn(&col, kernels, out_sample, g.positions(), g.patch_len(), g.c_out);
            for row in out_sample.chunks_mut(g.c_out) {
                for (o, &b) in row.iter_mut().zip(bias) {
                    *o += b;
                }
            }
        });

    let out = Tensor::new(&[n, g.oh, g.ow, g.c_out], out)?;
    Ok((out, ConvCache { input: input.clone() }))
}

/// Gradients of the forward map; `params` order is `[kernels, bias]`.
pub fn conv2d_backward<T: Real>(
    cache: &ConvCache<T>,
    params: &ConvParams<T>,
    upstream: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    let (input, params) = backward_inner(cache, params, upstream, true)?;
    Ok(LayerGradients {
        input: input.expect("input gradient requested"),
        params,
    })
}

/// Kernel and bias gradients only, for a first layer whose input gradient is
/// never used.
pub(crate) fn conv2d_param_grads<T: Real>(
    cache: &ConvCache<T>,
    params: &ConvParams<T>,
    upstream: &Tensor<T>,
) -> Result<Vec<Tensor<T>>> {
    Ok(backward_inner(cache, params, upstream, false)?.1)
}

#[allow(clippy::type_complexity)]
fn backward_inner<T: Real>(
    cache: &ConvCache<T>,
    params: &ConvParams<T>,
    upstream: &Tensor<T>,
    need_input: bool,
) -> Result<(Option<Tensor<T>>, Vec<Tensor<T>>)> {
    let input = &cache.input;
    let g = Geometry::of(input.shape(), params)?;
    let n = input.shape()[0];
    let expected = [n, g.oh, g.ow, g.c_out];
    if upstream.shape() != expected {
        return Err(Error::shape("conv2d_backward", &expected, upstream.shape()));
    }
    let in_len = g.h * g.w * g.c_in;
    let out_len = g.positions() * g.c_out;
    let k_len = params.kernels.len();
    let kernels = params.kernels.data();

    let mut d_input = vec![T::zero(); if need_input { n * in_len } else { 0 }];
    // Per-sample kernel/bias gradients, summed afterwards in sample order so
    // the result is independent of scheduling.
    let sample_grad = |d_in: Option<&mut [T]>, in_sample: &[T], up: &[T]| {
        let mut col = vec![T::zero(); g.positions() * g.patch_len()];
        g.im2col(in_sample, &mut col);
        let mut d_k = vec![T::zero(); k_len];
        gemm_tn_acc(&col, up, &mut d_k, g.positions(), g.patch_len(), g.c_out);

        let mut d_b = vec![T::zero(); g.c_out];
        for row in up.chunks(g.c_out) {
            for (d, &u) in d_b.iter_mut().zip(row) {
                *d += u;
            }
        }

        if let Some(d_in) = d_in {
            gemm_nt(up, kernels, &mut col, g.positions(), g.c_out, g.patch_len());
            g.col2im_acc(&col, d_in);
        }
        (d_k, d_b)
    };
    let partials: Vec<(Vec<T>, Vec<T>)> = if need_input {
        d_input
            .par_chunks_mut(in_len)
            .zip(input.data().par_chunks(in_len))
            .zip(upstream.data().par_chunks(out_len))
            .map(|((d_in, x), up)| sample_grad(Some(d_in), x, up))
            .collect()
    } else {
        input
            .data()
            .par_chunks(in_len)
            .zip(upstream.data().par_chunks(out_len))
            .map(|(x, up)| sample_grad(None, x, up))
            .collect()
    };

    let mut d_kernels = vec![T::zero(); k_len];
    let mut d_bias = vec![T::zero(); g.c_out];
    for (d_k, d_b) in &partials {
        for (acc, &v) in d_kernels.iter_mut().zip(d_k) {
            *acc += v;
        }
        for (acc, &v) in d_bias.iter_mut().zip(d_b) {
            *acc += v;
        }
    }

    let d_input = if need_input {
        Some(Tensor::new(input.shape(), d_input)?)
    } else {
        None
    };
    Ok((
        d_input,
        vec![
            Tensor::new(params.kernels.shape(), d_kernels)?,
            Tensor::new(params.bias.shape(), d_bias)?,
        ],
    ))
}
