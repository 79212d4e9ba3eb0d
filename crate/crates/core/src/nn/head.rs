//! Per-position classifier head: a bare affine map into the charset, with
//! no activation (softmax is fused into the loss or applied at decode).

use crate::autodiff::{Elem, Tensor};

use super::init::{Linear, ParamBuilder};

pub struct ClassifierHead<T: Elem> {
    linear: Linear<T>,
    num_classes: usize,
}

impl<T: Elem> ClassifierHead<T> {
    pub fn new(pb: &mut ParamBuilder<T>, prefix: &str, feature_dim: usize, num_classes: usize) -> Self {
        ClassifierHead { linear: Linear::new(pb, prefix, feature_dim, num_classes), num_classes }
    }

    /// Features \[B×t×d\] → logits \[B×t×C\].
    pub fn forward(&self, features: &Tensor<T>) -> Tensor<T> {
        self.linear.forward(features)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ops, Parameter};

    #[test]
    fn zero_weights_yield_bias_everywhere() {
        let mut pb = ParamBuilder::<f64>::new(0);
        let head = ClassifierHead::new(&mut pb, "head", 4, 3);
        let params = pb.into_params();
        params[0].set_value(&vec![0.0; params[0].numel()]);
        params[1].set_value(&[0.25, -1.0, 2.0]);
        let x = Tensor::<f64>::from_f64s(&[1, 2, 4], &[9.0; 8]);
        let y = head.forward(&x);
        assert_eq!(y.data(), &[0.25, -1.0, 2.0, 0.25, -1.0, 2.0]);
    }

    #[test]
    fn full_scale_shape_is_b_t_38() {
        let mut pb = ParamBuilder::<f32>::new(1);
        let head = ClassifierHead::new(&mut pb, "head", 512, 38);
        let y = head.forward(&Tensor::<f32>::zeros(&[2, 25, 512]));
        assert_eq!(y.shape(), [2, 25, 38]);
    }

    #[test]
    fn tiny_head_passes_gradient_check() {
        let mut pb = ParamBuilder::<f64>::new(2);
        let head = ClassifierHead::new(&mut pb, "head", 5, 4);
        let features = Parameter::<f64>::new(
            "features",
            &[1, 3, 5],
            (0..15).map(|i| ((2 * i + 1) as f64 * 0.3).sin()).collect(),
        );
        let mut params = pb.into_params();
        params.push(features.clone());
        let report = grad_check(
            || {
                let logits = head.forward(&features.leaf());
                ops::cross_entropy(&ops::reshape(&logits, &[3, 4]), &[1, 0, 3])
            },
            &params,
            1e-5,
            10,
        );
        assert!(report.max_rel_err() < 1e-5, "report:\n{report}");
    }
}
