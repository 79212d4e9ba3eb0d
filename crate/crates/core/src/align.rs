//! Visual-semantic alignment: S = softmax(Q·Vᵀ)·V.
//!
//! A trainable projection Q \[t×d\] scores every visual position for each
//! of the t character slots; softmax over the n visual positions turns the
//! scores into t attention maps, and the semantic sequence is their
//! weighted sum of visual vectors. There is deliberately no temperature or
//! 1/√d scaling inside this softmax. The model instantiates the projection
//! once and aligns at two call sites with the same storage, so the weights
//! learned decoding the late visual stream also steer the early one.

use crate::autodiff::{ops, Elem, Parameter, Tensor};
use crate::nn::ParamBuilder;

/// The shared trainable projection of the alignment module.
#[derive(Clone)]
pub struct AlignmentWeights<T: Elem> {
    q: Parameter<T>,
}

impl<T: Elem> AlignmentWeights<T> {
    /// Gaussian init with std 1/√d keeps the initial attention maps close
    /// to uniform.
    pub fn new(pb: &mut ParamBuilder<T>, name: &str, t: usize, d: usize) -> Self {
        AlignmentWeights { q: pb.gaussian(name, &[t, d], 1.0 / (d as f64).sqrt()) }
    }

    pub fn projection(&self) -> &Parameter<T> {
        &self.q
    }

    pub fn storage_id(&self) -> u64 {
        self.q.storage_id()
    }

    pub fn slots(&self) -> usize {
        self.q.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.q.shape()[1]
    }

    /// Align a visual sequence \[B×n×d\] into t semantic vectors.
    ///
    /// Returns `(S, A, q_leaf)`: the semantic sequence \[B×t×d\], the
    /// row-stochastic attention maps \[B×t×n\], and the graph leaf through
    /// which this call site's gradient flows back into the shared storage.
    pub fn align(&self, visual: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let d = self.feature_dim();
        assert!(
            visual.ndim() == 3 && visual.shape()[2] == d,
            "align dimension error: visual {:?}, projection {:?}",
            visual.shape(),
            self.q.shape()
        );
        let b = visual.shape()[0];

        let q_leaf = self.q.leaf();
        let q_batched = ops::broadcast_to_batch(&q_leaf, b);
        let scores = ops::bmm(&q_batched, &ops::permute(visual, &[0, 2, 1]));
        let attention = ops::softmax(&scores, 2);
        let semantic = ops::bmm(&attention, visual);
        (semantic, attention, q_leaf)
    }
}

/// Turn one character's attention row over an h×w grid into a full-size
/// heatmap: reshape, corner-aligned bilinear upsample to H×W, then min-max
/// normalise into [0,1] (a zero-range map becomes all zeros).
pub fn attention_heatmap(
    row: &[f64],
    grid: (usize, usize),
    image: (usize, usize),
) -> Vec<f64> {
    let (h, w) = grid;
    assert_eq!(
        row.len(),
        h * w,
        "heatmap dimension error: attention length {} does not match grid {h}x{w}",
        row.len()
    );
    let up = crate::data::bilinear_resize(row, h, w, image.0, image.1);
    let min = up.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = up.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return vec![0.0; up.len()];
    }
    up.iter().map(|v| (v - min) / (max - min)).collect()
}
