//! Image preprocessing: aspect-preserving resize to the target height,
//! replication padding (or right trim) to the target width, and scaling
//! of pixel values into [−1, 1].

use crate::autodiff::{Elem, Tensor};

use super::pnm::RawImage;

/// Corner-aligned bilinear resampling of a single channel. With matching
/// sizes this is the identity.
pub fn bilinear_resize(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    assert_eq!(src.len(), sh * sw, "resize dimension error: {} != {sh}x{sw}", src.len());
    let scale = |dst_len: usize, src_len: usize, i: usize| -> f64 {
        if dst_len <= 1 {
            0.0
        } else {
            i as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(dh * dw);
    for dy in 0..dh {
        let sy = scale(dh, sh, dy);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for dx in 0..dw {
            let sx = scale(dw, sw, dx);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f64;
            let v = src[y0 * sw + x0] * (1.0 - fy) * (1.0 - fx)
                + src[y0 * sw + x1] * (1.0 - fy) * fx
                + src[y1 * sw + x0] * fy * (1.0 - fx)
                + src[y1 * sw + x1] * fy * fx;
            out.push(v);
        }
    }
    out
}

/// Preprocess one image into a \[3×target_h×target_w\] tensor in [−1, 1]:
/// resize to the target height with aspect ratio preserved, then
/// replication-pad on the right with the last content column (or trim the
/// right) to reach the target width.
pub fn preprocess_image<T: Elem>(
    img: &RawImage,
    target_h: usize,
    target_w: usize,
) -> Tensor<T> {
    assert!(img.width > 0 && img.height > 0, "preprocess input error: empty image");
    let scaled_w =
        ((img.width as f64 * target_h as f64 / img.height as f64).round() as usize).max(1);
    let content_w = scaled_w.min(target_w);

    let mut data = Vec::with_capacity(3 * target_h * target_w);
    for ch in 0..3 {
        let channel: Vec<f64> =
            img.rgb.chunks(3).map(|px| px[ch] as f64).collect();
        let resized = bilinear_resize(&channel, img.height, img.width, target_h, scaled_w);
        for y in 0..target_h {
            let row = &resized[y * scaled_w..y * scaled_w + content_w];
            let last = row[content_w - 1];
            for x in 0..target_w {
                let v = if x < content_w { row[x] } else { last };
                data.push(T::from_f64(v / 127.5 - 1.0));
            }
        }
    }
    Tensor::from_vec(&[3, target_h, target_w], data)
}

/// Stack equally shaped \[3×H×W\] image tensors into a \[B×3×H×W\] batch.
pub fn batch_images<T: Elem>(images: &[Tensor<T>]) -> Tensor<T> {
    assert!(!images.is_empty(), "cannot batch zero images");
    let shape = images[0].shape().to_vec();
    let mut data = Vec::with_capacity(images.len() * images[0].numel());
    for img in images {
        assert_eq!(img.shape(), shape, "batch dimension error");
        data.extend_from_slice(img.data());
    }
    let mut out_shape = vec![images.len()];
    out_shape.extend_from_slice(&shape);
    Tensor::from_vec(&out_shape, data)
}
