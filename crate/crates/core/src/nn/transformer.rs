//! Pre-LN transformer block: x + MHSA(LN(x)), then + FFN(LN(·)).

use std::cell::RefCell;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Elem, Tensor};

use super::attention::MultiHeadAttention;
use super::init::{LayerNorm, Linear, ParamBuilder};

#[derive(Debug, Clone, Copy)]
pub struct TransformerBlockConfig {
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
}

impl TransformerBlockConfig {
    pub fn new(model_dim: usize, num_heads: usize) -> Self {
        assert!(
            model_dim % num_heads == 0,
            "transformer config error: dim {model_dim} not divisible by {num_heads} heads"
        );
        TransformerBlockConfig { model_dim, num_heads, ffn_dim: 4 * model_dim, dropout: 0.1 }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }
}

pub struct TransformerBlock<T: Elem> {
    ln1: LayerNorm<T>,
    mhsa: MultiHeadAttention<T>,
    ln2: LayerNorm<T>,
    ffn_in: Linear<T>,
    ffn_out: Linear<T>,
    dropout: f64,
}

impl<T: Elem> TransformerBlock<T> {
    pub fn new(pb: &mut ParamBuilder<T>, prefix: &str, cfg: TransformerBlockConfig) -> Self {
        TransformerBlock {
            ln1: LayerNorm::new(pb, &format!("{prefix}.ln1"), cfg.model_dim),
            mhsa: MultiHeadAttention::new(pb, &format!("{prefix}.mhsa"), cfg.model_dim, cfg.num_heads),
            ln2: LayerNorm::new(pb, &format!("{prefix}.ln2"), cfg.model_dim),
            ffn_in: Linear::new(pb, &format!("{prefix}.ffn.in"), cfg.model_dim, cfg.ffn_dim),
            ffn_out: Linear::new(pb, &format!("{prefix}.ffn.out"), cfg.ffn_dim, cfg.model_dim),
            dropout: cfg.dropout,
        }
    }

    /// Shape-preserving for any sequence length ≥ 1. Returns the layer
    /// output and the attention weights \[B×heads×L×L\]. Dropout is active
    /// only when a generator is supplied.
    pub fn forward(
        &self,
        x: &Tensor<T>,
        dropout_rng: Option<&RefCell<ChaCha8Rng>>,
    ) -> (Tensor<T>, Tensor<T>) {
        let maybe_drop = |t: Tensor<T>| match dropout_rng {
            Some(rng) if self.dropout > 0.0 => ops::dropout(&t, self.dropout, &mut rng.borrow_mut()),
            _ => t,
        };

        let (attended, attn) = self.mhsa.forward(&self.ln1.forward(x));
        let x = ops::add(x, &maybe_drop(attended));

        let hidden = ops::relu(&self.ffn_in.forward(&self.ln2.forward(&x)));
        let x = ops::add(&x, &maybe_drop(self.ffn_out.forward(&hidden)));

        (x, attn)
    }
}
