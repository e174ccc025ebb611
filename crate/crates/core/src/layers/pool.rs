use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Flat input offset of the winning element for every pooled output.
#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2 over `[n, h, w, c]`. A trailing odd
/// row/column is dropped. Ties go to the first element in row-major window
/// order.
pub fn maxpool2d_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let shape = input.shape();
    if shape.len() != 4 || shape[1] < 2 || shape[2] < 2 {
        return Err(Error::invalid(format!(
            "maxpool2d expects [n, h>=2, w>=2, c], got {shape:?}"
        )));
    }
    let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let data = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..c {
                    let at = |dy: usize, dx: usize| ((b * h + 2 * y + dy) * w + 2 * x + dx) * c + ch;
                    let mut best = at(0, 0);
                    for idx in [at(0, 1), at(1, 0), at(1, 1)] {
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::new(&[n, oh, ow, c], out)?,
        PoolCache {
            input_shape: shape.to_vec(),
            argmax,
        },
    ))
}

/// Routes each upstream value to its window's argmax position.
pub fn maxpool2d_backward<T: Real>(cache: &PoolCache, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let s = &cache.input_shape;
    let expected = [s[0], s[1] / 2, s[2] / 2, s[3]];
    if upstream.shape() != expected {
        return Err(Error::shape("maxpool2d_backward", &expected, upstream.shape()));
    }
    let mut grad = Tensor::zeros(s)?;
    let g = grad.data_mut();
    for (&idx, &u) in cache.argmax.iter().zip(upstream.data()) {
        g[idx] += u;
    }
    Ok(grad)
}
