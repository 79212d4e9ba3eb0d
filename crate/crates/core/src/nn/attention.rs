//! Multi-head self-attention with per-head scaling 1/√(d/heads).

use crate::autodiff::{ops, Elem, Tensor};

use super::init::{Linear, ParamBuilder};

pub struct MultiHeadAttention<T: Elem> {
    wq: Linear<T>,
    wk: Linear<T>,
    wv: Linear<T>,
    wo: Linear<T>,
    num_heads: usize,
    model_dim: usize,
}

impl<T: Elem> MultiHeadAttention<T> {
    pub fn new(pb: &mut ParamBuilder<T>, prefix: &str, d: usize, num_heads: usize) -> Self {
        assert!(
            d % num_heads == 0,
            "attention config error: dim {d} not divisible by {num_heads} heads"
        );
        MultiHeadAttention {
            wq: Linear::new(pb, &format!("{prefix}.wq"), d, d),
            wk: Linear::new(pb, &format!("{prefix}.wk"), d, d),
            wv: Linear::new(pb, &format!("{prefix}.wv"), d, d),
            wo: Linear::new(pb, &format!("{prefix}.wo"), d, d),
            num_heads,
            model_dim: d,
        }
    }

    /// x \[B×L×d\] → (output \[B×L×d\], attention \[B×heads×L×L\]).
    /// Every attention row is a softmax over the L keys.
    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let (d, h) = (self.model_dim, self.num_heads);
        assert!(
            x.ndim() == 3 && x.shape()[2] == d,
            "attention dimension error: input {:?}, model dim {d}",
            x.shape()
        );
        let (b, l) = (x.shape()[0], x.shape()[1]);
        let dh = d / h;

        // [B,L,d] -> [B·h, L, dh]
        let split = |t: &Tensor<T>| {
            let t = ops::reshape(t, &[b, l, h, dh]);
            let t = ops::permute(&t, &[0, 2, 1, 3]);
            ops::reshape(&t, &[b * h, l, dh])
        };
        let q = split(&self.wq.forward(x));
        let k = split(&self.wk.forward(x));
        let v = split(&self.wv.forward(x));

        let kt = ops::permute(&k, &[0, 2, 1]);
        let scores = ops::scale(&ops::bmm(&q, &kt), 1.0 / (dh as f64).sqrt());
        let attn = ops::softmax(&scores, 2);
        let ctx = ops::bmm(&attn, &v);

        let merged = ops::reshape(&ctx, &[b, h, l, dh]);
        let merged = ops::permute(&merged, &[0, 2, 1, 3]);
        let merged = ops::reshape(&merged, &[b, l, d]);
        let out = self.wo.forward(&merged);

        (out, ops::reshape(&attn, &[b, h, l, l]))
    }
}
