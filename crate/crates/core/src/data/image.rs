use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decodes a PNG or JPEG file into an `[h, w, 3]` tensor with values in
/// `[0, 255]`. Grayscale is replicated across channels and alpha dropped.
pub fn decode_image(path: &Path) -> Result<Tensor<f32>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    let format = match image::guess_format(&bytes) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::CorruptImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Tensor::new(&[h, w, 3], rgb.into_raw().into_iter().map(f32::from).collect())
}

/// Writes an `[h, w, 3]` tensor with values in `[0, 1]` as an 8-bit PNG.
pub fn encode_png(img: &Tensor<f32>, path: &Path) -> Result<()> {
    let [h, w, c] = hwc(img)?;
    if c != 3 {
        return Err(Error::invalid(format!("png export needs 3 channels, got {c}")));
    }
    let raw = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = RgbImage::from_raw(w as u32, h as u32, raw).ok_or_else(|| Error::invalid("png buffer size mismatch"))?;
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::invalid(other.to_string()),
    })
}

pub(crate) fn hwc(img: &Tensor<f32>) -> Result<[usize; 3]> {
    img.shape()
        .try_into()
        .map_err(|_| Error::invalid(format!("expected [h, w, c] image, got {:?}", img.shape())))
}

/// Bilinear sample at continuous source coordinates, clamped to the image
/// (edge replication). Output is kept inside the range of the four taps.
pub(crate) fn sample_clamped(img: &Tensor<f32>, sy: f64, sx: f64, ch: usize) -> f32 {
    let [h, w, c] = hwc(img).expect("validated by caller");
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    let d = img.data();
    let at = |y: usize, x: usize| d[(y * w + x) * c + ch];
    let (a, b, p, q) = (at(y0, x0), at(y0, x1), at(y1, x0), at(y1, x1));
    let lerp = |u: f32, v: f32, t: f64| u as f64 + (v as f64 - u as f64) * t;
    let top = lerp(a, b, fx);
    let bottom = lerp(p, q, fx);
    let v = top + (bottom - top) * fy;
    let lo = a.min(b).min(p).min(q);
    let hi = a.max(b).max(p).max(q);
    (v as f32).clamp(lo, hi)
}

/// Bilinear resize with half-pixel-centre alignment.
pub fn resize_bilinear(img: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let [h, w, c] = hwc(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidShape(vec![out_h, out_w, c]));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let (scale_y, scale_x) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
    Tensor::from_fn(&[out_h, out_w, c], |i| {
        let (y, x, ch) = (i / (out_w * c), i / c % out_w, i % c);
        let sy = (y as f64 + 0.5) * scale_y - 0.5;
        let sx = (x as f64 + 0.5) * scale_x - 0.5;
        sample_clamped(img, sy, sx, ch)
    })
}

/// Maps `[0, 255]` to `[0, 1]`.
pub fn rescale(img: &Tensor<f32>) -> Tensor<f32> {
    img.map(|v| v / 255.0)
}

/// Decode, resize to `size x size`, rescale.
pub fn preprocess(path: &Path, size: usize) -> Result<Tensor<f32>> {
    Ok(rescale(&resize_bilinear(&decode_image(path)?, size, size)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Rgba, RgbaImage};
    use proptest::prelude::*;

    #[test]
    fn decode_white_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        RgbImage::from_pixel(1, 1, image::Rgb([255, 255, 255]))
            .save(&path)
            .unwrap();
        let t = decode_image(&path).unwrap();
        assert_eq!(t.shape(), &[1, 1, 3]);
        assert_eq!(t.data(), &[255.0, 255.0, 255.0]);
    }

    #[test]
    fn decode_rgba_drops_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        let mut img = RgbaImage::new(2, 1);
        img.put_pixel(0, 0, Rgba([10, 20, 30, 0]));
        img.put_pixel(1, 0, Rgba([200, 100, 50, 128]));
        img.save(&path).unwrap();
        let t = decode_image(&path).unwrap();
        assert_eq!(t.shape(), &[1, 2, 3]);
        assert_eq!(t.data(), &[10.0, 20.0, 30.0, 200.0, 100.0, 50.0]);
    }

    #[test]
    fn decode_gray_replicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        GrayImage::from_raw(2, 1, vec![7, 99]).unwrap().save(&path).unwrap();
        assert_eq!(decode_image(&path).unwrap().data(), &[7.0, 7.0, 7.0, 99.0, 99.0, 99.0]);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        assert!(matches!(decode_image(&missing), Err(Error::MissingFile(_))));

        let text = dir.path().join("notes.png");
        std::fs::write(&text, b"definitely not an image").unwrap();
        assert!(matches!(decode_image(&text), Err(Error::UnsupportedFormat(_))));

        let jpg = dir.path().join("full.jpg");
        RgbImage::from_pixel(16, 16, image::Rgb([90, 160, 30]))
            .save(&jpg)
            .unwrap();
        assert!(decode_image(&jpg).is_ok());
        let bytes = std::fs::read(&jpg).unwrap();
        let truncated = dir.path().join("cut.jpg");
        std::fs::write(&truncated, &bytes[..bytes.len() / 3]).unwrap();
        assert!(matches!(decode_image(&truncated), Err(Error::CorruptImage { .. })));
    }

    #[test]
    fn resize_examples() {
        let img = Tensor::from_fn(&[37, 50, 3], |i| (i % 256) as f32).unwrap();
        assert_eq!(resize_bilinear(&img, 256, 256).unwrap().shape(), &[256, 256, 3]);

        let flat = Tensor::full(&[5, 9, 3], 42.5f32).unwrap();
        assert_eq!(
            resize_bilinear(&flat, 13, 4).unwrap(),
            Tensor::full(&[13, 4, 3], 42.5).unwrap()
        );

        let four = Tensor::new(&[2, 2, 1], vec![10.0f32, 20.0, 30.0, 60.0]).unwrap();
        assert_eq!(resize_bilinear(&four, 1, 1).unwrap().data(), &[30.0]);
    }

    #[test]
    fn rescale_examples() {
        let t = Tensor::new(&[3], vec![255.0f32, 0.0, 128.0]).unwrap();
        let r = rescale(&t);
        assert_eq!(r.data()[0], 1.0);
        assert_eq!(r.data()[1], 0.0);
        assert!((r.data()[2] - 0.501961).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn resize_stays_in_input_range(
            data in proptest::collection::vec(0.0f32..255.0, 4 * 6 * 3),
            oh in 1usize..12, ow in 1usize..12,
        ) {
            let img = Tensor::new(&[4, 6, 3], data).unwrap();
            let (lo, hi) = (img.data().iter().copied().fold(f32::MAX, f32::min), img.max());
            let out = resize_bilinear(&img, oh, ow).unwrap();
            prop_assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
