//! 2-D convolution via im2col and the shared matmul kernels.
//!
//! Interior layers use zero padding; replication padding is an image
//! preprocessing concern and lives in the data pipeline. The patch matrix
//! is rebuilt during backward instead of being stored, trading a little
//! compute for a much smaller live graph.

use super::elem::Elem;
use super::ops::{mm_abt_acc, mm_acc, mm_atb_acc};
use super::tensor::Tensor;

/// Spatial output length for one axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(
        input + 2 * pad >= kernel,
        "conv2d dimension error: kernel {kernel} does not fit input {input} with pad {pad}"
    );
    (input + 2 * pad - kernel) / stride + 1
}

/// Gather 3×3-style patches of one image \[C×H×W\] into a column matrix
/// \[C·kh·kw × OH·OW\]. Out-of-bounds taps read zero.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Elem>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    pad: (usize, usize),
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    let pixels = oh * ow;
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let dst = &mut cols[row * pixels..(row + 1) * pixels];
                for oy in 0..oh {
                    let iy = (oy * stride.0 + ki) as isize - pad.0 as isize;
                    if iy < 0 || iy >= h as isize {
                        for v in &mut dst[oy * ow..(oy + 1) * ow] {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src_row = &x[(ch * h + iy as usize) * w..(ch * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride.1 + kj) as isize - pad.1 as isize;
                        dst[oy * ow + ox] = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add a column-matrix gradient back onto the image.
#[allow(clippy::too_many_arguments)]
fn col2im_acc<T: Elem>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    pad: (usize, usize),
    oh: usize,
    ow: usize,
    dx: &mut [T],
) {
    let pixels = oh * ow;
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let src = &cols[row * pixels..(row + 1) * pixels];
                for oy in 0..oh {
                    let iy = (oy * stride.0 + ki) as isize - pad.0 as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row =
                        &mut dx[(ch * h + iy as usize) * w..(ch * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride.1 + kj) as isize - pad.1 as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Batched 2-D convolution: x \[B×C×H×W\], w \[O×C×kh×kw\], b \[O\] →
/// \[B×O×H'×W'\] with H' = ⌊(H+2p−k)/s⌋+1.
pub fn conv2d<T: Elem>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Tensor<T> {
    assert_eq!(x.ndim(), 4, "conv2d dimension error: input {:?}", x.shape());
    assert_eq!(w.ndim(), 4, "conv2d dimension error: kernel {:?}", w.shape());
    let (bsz, c, h, width) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, wc, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(
        c, wc,
        "conv2d dimension error: input channels {c} (shape {:?}) vs kernel channels {wc} (shape {:?})",
        x.shape(),
        w.shape()
    );
    assert_eq!(b.shape(), [o], "conv2d dimension error: bias {:?} for {o} filters", b.shape());

    let oh = conv_out_len(h, kh, stride.0, pad.0);
    let ow = conv_out_len(width, kw, stride.1, pad.1);
    let pixels = oh * ow;
    let patch = c * kh * kw;

    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = vec![T::zero(); bsz * o * pixels];
    let mut cols = vec![T::zero(); patch * pixels];
    for img in 0..bsz {
        im2col(&xd[img * c * h * width..], c, h, width, kh, kw, stride, pad, oh, ow, &mut cols);
        let dst = &mut out[img * o * pixels..(img + 1) * o * pixels];
        mm_acc(wd, &cols, o, patch, pixels, dst);
        for (f, &bias) in bd.iter().enumerate() {
            for v in &mut dst[f * pixels..(f + 1) * pixels] {
                *v = *v + bias;
            }
        }
    }

    Tensor::from_op(
        vec![bsz, o, oh, ow],
        out,
        vec![x.clone(), w.clone(), b.clone()],
        Box::new(move |args, inputs| {
            let xd = inputs[0].data();
            let wd = inputs[1].data();
            let g = args.grad_out;
            let mut dx = vec![T::zero(); xd.len()];
            let mut dw = vec![T::zero(); wd.len()];
            let mut db = vec![T::zero(); o];
            let mut cols = vec![T::zero(); patch * pixels];
            let mut dcols = vec![T::zero(); patch * pixels];
            for img in 0..bsz {
                let gimg = &g[img * o * pixels..(img + 1) * o * pixels];
                im2col(&xd[img * c * h * width..], c, h, width, kh, kw, stride, pad, oh, ow, &mut cols);
                // dW += dY · colsᵀ; db += row sums; dcols = Wᵀ · dY
                mm_abt_acc(gimg, &cols, o, pixels, patch, &mut dw);
                for f in 0..o {
                    for &gv in &gimg[f * pixels..(f + 1) * pixels] {
                        db[f] = db[f] + gv;
                    }
                }
                for v in &mut dcols {
                    *v = T::zero();
                }
                mm_atb_acc(wd, gimg, o, patch, pixels, &mut dcols);
                col2im_acc(
                    &dcols,
                    c,
                    h,
                    width,
                    kh,
                    kw,
                    stride,
                    pad,
                    oh,
                    ow,
                    &mut dx[img * c * h * width..(img + 1) * c * h * width],
                );
            }
            vec![Some(dx), Some(dw), Some(db)]
        }),
    )
}
