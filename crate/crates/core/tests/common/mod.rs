//! Helpers shared by the integration suites: synthetic image sets, finite
//! differences, and reference implementations written independently of the
//! library code they check.

#![allow(dead_code)]

use std::path::Path;

use leafnet::data::{scan_dataset, split_dataset, Dataset, ImagePipeline, SplitRatios};
use leafnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi)).unwrap()
}

/// Two classes of `size`x`size` RGB images over a noisy dark background:
/// a filled disc ("disc") or a ring of similar size ("ring"), placed and
/// tinted at random so neither position nor colour gives the class away.
pub fn write_blob_dataset(root: &Path, per_class: usize, size: u32, seed: u64) {
    let mut rng = rng(seed);
    for (label, class) in ["disc", "ring"].iter().enumerate() {
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let s = size as f64;
            let (cx, cy) = (rng.gen_range(0.3..0.7) * s, rng.gen_range(0.3..0.7) * s);
            let r = rng.gen_range(0.18..0.28) * s;
            let tint: [f64; 3] = [
                rng.gen_range(0.4..1.0),
                rng.gen_range(0.4..1.0),
                rng.gen_range(0.2..0.8),
            ];
            let noise: Vec<f64> = (0..size * size * 3).map(|_| rng.gen_range(0.0..0.25)).collect();
            let img = image::RgbImage::from_fn(size, size, |x, y| {
                let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                let inside = if label == 0 { d < r } else { d < r && d > 0.6 * r };
                let v = if inside { 1.0 } else { 0.0 };
                let base = ((y * size + x) * 3) as usize;
                let px = |c: usize| ((noise[base + c] + v * tint[c]).min(1.0) * 255.0).round() as u8;
                image::Rgb([px(0), px(1), px(2)])
            });
            img.save(dir.join(format!("{class}_{i:03}.png"))).unwrap();
        }
    }
}

/// Scans `root`, splits 80/10/10 without augmentation and wraps the result
/// in a cached pipeline producing `size`x`size` inputs.
pub fn load_dataset(root: &Path, size: usize, seed: u64, augment: bool) -> Dataset {
    let (names, originals) = scan_dataset(root).unwrap();
    let manifest = split_dataset(names, &originals, &SplitRatios::default(), seed, augment).unwrap();
    Dataset::new(manifest, ImagePipeline::new(size).with_cache(true)).unwrap()
}

pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` with respect to every element of `x`.
pub fn numeric_grad(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + FD_STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - FD_STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or the plain difference norm when both
/// gradients vanish.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// `Σ y ⊙ r`: a scalar whose gradient with respect to `y` is `r`.
pub fn dot(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    assert_eq!(y.shape(), r.shape());
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Direct four-deep loop convolution (cross-correlation), zero padding `pad`.
pub fn naive_conv(input: &Tensor<f64>, kernels: &Tensor<f64>, bias: &[f64], pad: usize) -> Tensor<f64> {
    let [n, h, w, cin] = <[usize; 4]>::try_from(input.shape()).unwrap();
    let [kh, kw, _, cout] = <[usize; 4]>::try_from(kernels.shape()).unwrap();
    let oh = h + 2 * pad - kh + 1;
    let ow = w + 2 * pad - kw + 1;
    let mut out = vec![0.0; n * oh * ow * cout];
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for o in 0..cout {
                    let mut acc = bias[o];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let (iy, ix) = (y + dy, x + dx);
                            if iy < pad || ix < pad || iy - pad >= h || ix - pad >= w {
                                continue;
                            }
                            for i in 0..cin {
                                acc += input.get(&[b, iy - pad, ix - pad, i]).unwrap()
                                    * kernels.get(&[dy, dx, i, o]).unwrap();
                            }
                        }
                    }
                    out[((b * oh + y) * ow + x) * cout + o] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, oh, ow, cout], out).unwrap()
}

/// Per-class tallies straight from the label vectors, then macro averages.
/// Returns `(accuracy, precision, recall, f1)`.
pub fn brute_force_metrics(pred: &[usize], truth: &[usize], classes: usize) -> (f64, f64, f64, f64) {
    let n = pred.len() as f64;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64;
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = pred.iter().zip(truth).filter(|&(&p, &t)| p == c && t == c).count() as f64;
        let fp = pred.iter().zip(truth).filter(|&(&p, &t)| p == c && t != c).count() as f64;
        let fn_ = pred.iter().zip(truth).filter(|&(&p, &t)| p != c && t == c).count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let k = classes as f64;
    (correct / n, p_sum / k, r_sum / k, f_sum / k)
}
