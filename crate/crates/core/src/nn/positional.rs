//! Fixed sinusoidal positional encoding.

use crate::autodiff::{Elem, Tensor};

/// Sinusoidal table \[len×d\]: channel pair 2i holds
/// sin(pos · 10000^(−2i/d)), channel 2i+1 the matching cosine. `d` must be
/// even. Deterministic and parameter-free.
pub fn sinusoidal_table<T: Elem>(len: usize, d: usize) -> Tensor<T> {
    assert!(d % 2 == 0, "positional encoding config error: dimension {d} must be even");
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d / 2 {
            let freq = 10000f64.powf(-((2 * i) as f64) / d as f64);
            let angle = pos as f64 * freq;
            data.push(T::from_f64(angle.sin()));
            data.push(T::from_f64(angle.cos()));
        }
    }
    Tensor::from_vec(&[len, d], data)
}
