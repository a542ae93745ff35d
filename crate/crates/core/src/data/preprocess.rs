use super::{Image, LabeledFrame};
use crate::{Error, Result};

/// Side length frames are resized to.
pub const TARGET_SIZE: usize = 64;
/// Smallest accepted input side.
pub const MIN_INPUT_SIZE: usize = 8;

/// Default minimum variance-of-Laplacian score. Chosen well below the
/// sharpness of synthetic frames so almost none are dropped.
pub const DEFAULT_BLUR_THRESHOLD: f64 = 1e-4;

/// Bilinear resize (half-pixel centers, clamped edges) to `size x size`.
/// Frames already at the target size are returned unchanged.
pub fn preprocess(frame: &LabeledFrame, size: usize) -> Result<LabeledFrame> {
    let img = &frame.pixels;
    if img.height() < MIN_INPUT_SIZE || img.width() < MIN_INPUT_SIZE || size == 0 {
        return Err(Error::shape(format!(
            "cannot resize a {}x{} frame (minimum {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}) to {size}",
            img.height(),
            img.width()
        )));
    }
    let mut out = frame.clone();
    if img.height() != size || img.width() != size {
        out.pixels = resize_bilinear(img, size, size);
    }
    Ok(out)
}

fn source_coords(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (pos.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, pos - i0 as f64)
}

pub fn resize_bilinear(img: &Image, height: usize, width: usize) -> Image {
    let (h, w) = (img.height(), img.width());
    let ys: Vec<_> = (0..height).map(|y| source_coords(y, h, height)).collect();
    let xs: Vec<_> = (0..width).map(|x| source_coords(x, w, width)).collect();
    let mut data = Vec::with_capacity(Image::CHANNELS * height * width);
    for c in 0..Image::CHANNELS {
        let plane = img.channel(c);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] as f64 * (1.0 - fx) + plane[y0 * w + x1] as f64 * fx;
                let bottom = plane[y1 * w + x0] as f64 * (1.0 - fx) + plane[y1 * w + x1] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push((v as f32).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(height, width, data).expect("resize keeps values in range")
}

/// Variance of the 3x3 Laplacian (center -4, 4-neighbours +1) of the luma
/// channel. Borders replicate the edge pixel. Higher means sharper.
pub fn blur_score(frame: &LabeledFrame) -> f64 {
    image_blur_score(&frame.pixels)
}

pub fn image_blur_score(img: &Image) -> f64 {
    let gray = img.grayscale();
    let response = laplacian(&gray, img.height(), img.width());
    let n = response.len() as f64;
    let mean = response.iter().sum::<f64>() / n;
    response.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn laplacian(gray: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        gray[yy * w + xx]
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            out.push(at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x));
        }
    }
    out
}

/// Keep frames whose blur score is at least `threshold`, preserving order.
pub fn filter_blurred(frames: Vec<LabeledFrame>, threshold: f64) -> Result<Vec<LabeledFrame>> {
    if !(threshold >= 0.0) {
        return Err(Error::config(format!("blur threshold must be >= 0, got {threshold}")));
    }
    Ok(frames.into_iter().filter(|f| blur_score(f) >= threshold).collect())
}

/// Round pixel values to 8-bit levels, as they would be after a PNG round trip.
pub fn quantize_u8(img: &Image) -> Image {
    let data = img.data().iter().map(|&v| (v * 255.0).round() / 255.0).collect();
    Image::new(img.height(), img.width(), data).expect("quantization keeps values in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    fn frame(img: Image) -> LabeledFrame {
        LabeledFrame { id: "f".into(), pixels: img, patient_id: 0, label: Label::Normal }
    }

    #[test]
    fn paper_resolution_is_downsized() {
        let big = Image::filled(1072, 1072, 0.25);
        let out = preprocess(&frame(big), TARGET_SIZE).unwrap();
        assert_eq!((out.pixels.height(), out.pixels.width()), (64, 64));
        assert_eq!(out.pixels.data().len(), 64 * 64 * 3);
        assert!(out.pixels.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn degenerate_input_is_rejected() {
        assert!(preprocess(&frame(Image::filled(4, 64, 0.0)), 64).is_err());
    }

    #[test]
    fn constant_image_has_zero_blur_score() {
        assert_eq!(blur_score(&frame(Image::filled(64, 64, 0.7))), 0.0);
    }

    #[test]
    fn negative_threshold_is_a_config_error() {
        assert!(filter_blurred(vec![], -1.0).is_err());
    }
}
