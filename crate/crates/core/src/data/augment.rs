//! The fixed offline augmentation set: horizontal flip, vertical flip,
//! centre zoom and a 10° counter-clockwise rotation.

use serde::{Deserialize, Serialize};

use super::image::{hwc, sample_clamped};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    FlipH,
    FlipV,
    Zoom,
    Rotate,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::FlipH => "flip_h",
            Provenance::FlipV => "flip_v",
            Provenance::Zoom => "zoom",
            Provenance::Rotate => "rotate",
        }
    }
}

/// The four derived variants generated per original, in manifest order.
pub const AUGMENTATIONS: [Provenance; 4] = [
    Provenance::FlipH,
    Provenance::FlipV,
    Provenance::Zoom,
    Provenance::Rotate,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderPolicy {
    /// Out-of-image samples take the nearest edge pixel.
    #[default]
    Replicate,
    /// Out-of-image samples are black.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Side fraction kept by the centre crop before resampling back.
    pub zoom_crop: f64,
    /// Counter-clockwise rotation angle.
    pub rotation_degrees: f64,
    pub border: BorderPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            zoom_crop: 0.8,
            rotation_degrees: 10.0,
            border: BorderPolicy::Replicate,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zoom_crop > 0.0 && self.zoom_crop <= 1.0) {
            return Err(Error::invalid(format!(
                "zoom crop fraction must be in (0, 1], got {}",
                self.zoom_crop
            )));
        }
        if !self.rotation_degrees.is_finite() {
            return Err(Error::invalid("rotation angle must be finite"));
        }
        Ok(())
    }

    pub fn apply(&self, provenance: Provenance, img: &Tensor<f32>) -> Result<Tensor<f32>> {
        match provenance {
            Provenance::Original => Ok(img.clone()),
            Provenance::FlipH => flip_horizontal(img),
            Provenance::FlipV => flip_vertical(img),
            Provenance::Zoom => center_zoom(img, self.zoom_crop),
            Provenance::Rotate => rotate(img, self.rotation_degrees, self.border),
        }
    }
}

/// Mirror left-right.
pub fn flip_horizontal(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    let [_, w, c] = hwc(img)?;
    Tensor::from_fn(img.shape(), |i| {
        let (row, x, ch) = (i / (w * c), i / c % w, i % c);
        img.data()[(row * w + (w - 1 - x)) * c + ch]
    })
}

/// Mirror top-bottom.
pub fn flip_vertical(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    let [h, w, c] = hwc(img)?;
    let row_len = w * c;
    Tensor::from_fn(img.shape(), |i| {
        let (y, rest) = (i / row_len, i % row_len);
        img.data()[(h - 1 - y) * row_len + rest]
    })
}

/// Crops the central `crop` fraction of each side and resamples it back to
/// the original extent.
pub fn center_zoom(img: &Tensor<f32>, crop: f64) -> Result<Tensor<f32>> {
    let [h, w, c] = hwc(img)?;
    if !(crop > 0.0 && crop <= 1.0) {
        return Err(Error::invalid(format!("crop fraction {crop} outside (0, 1]")));
    }
    let (crop_h, crop_w) = (h as f64 * crop, w as f64 * crop);
    let (top, left) = ((h as f64 - crop_h) / 2.0, (w as f64 - crop_w) / 2.0);
    Tensor::from_fn(img.shape(), |i| {
        let (y, x, ch) = (i / (w * c), i / c % w, i % c);
        let sy = top + (y as f64 + 0.5) * crop_h / h as f64 - 0.5;
        let sx = left + (x as f64 + 0.5) * crop_w / w as f64 - 0.5;
        sample_clamped(img, sy, sx, ch)
    })
}

/// Rotates counter-clockwise (as displayed, rows growing downwards) about the
/// image centre with bilinear resampling.
pub fn rotate(img: &Tensor<f32>, degrees: f64, border: BorderPolicy) -> Result<Tensor<f32>> {
    let [h, w, c] = hwc(img)?;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let data = img.data();
    Tensor::from_fn(img.shape(), |i| {
        let (y, x, ch) = (i / (w * c), i / c % w, i % c);
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        // inverse of the forward map (x', y') = (x cos + y sin, -x sin + y cos)
        let sx = cx + dx * cos - dy * sin;
        let sy = cy + dx * sin + dy * cos;
        match border {
            BorderPolicy::Replicate => sample_clamped(img, sy, sx, ch),
            BorderPolicy::Zero => {
                let (y0, x0) = (sy.floor(), sx.floor());
                let (fy, fx) = (sy - y0, sx - x0);
                let tap = |yy: f64, xx: f64| -> f64 {
                    if yy < 0.0 || xx < 0.0 || yy > (h - 1) as f64 || xx > (w - 1) as f64 {
                        0.0
                    } else {
                        data[(yy as usize * w + xx as usize) * c + ch] as f64
                    }
                };
                let top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1.0) * fx;
                let bottom = tap(y0 + 1.0, x0) * (1.0 - fx) + tap(y0 + 1.0, x0 + 1.0) * fx;
                (top * (1.0 - fy) + bottom * fy) as f32
            }
        }
    })
}

/// Generates the four augmented variants of one preprocessed image.
pub fn augment_record(img: &Tensor<f32>, cfg: &AugmentConfig) -> Result<Vec<(Provenance, Tensor<f32>)>> {
    AUGMENTATIONS.iter().map(|&p| Ok((p, cfg.apply(p, img)?))).collect()
}
