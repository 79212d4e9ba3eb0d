//! Parameter construction: seeded initialisation and the model-wide
//! registry that the census and optimizer iterate over.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{ops, Elem, Parameter, Tensor};

/// Builds named parameters with a seeded generator and records every one
/// in creation order. The same seed always produces the same values.
pub struct ParamBuilder<T: Elem> {
    rng: ChaCha8Rng,
    params: Vec<Parameter<T>>,
}

impl<T: Elem> ParamBuilder<T> {
    pub fn new(seed: u64) -> Self {
        ParamBuilder { rng: ChaCha8Rng::seed_from_u64(seed), params: Vec::new() }
    }

    fn push(&mut self, p: Parameter<T>) -> Parameter<T> {
        self.params.push(p.clone());
        p
    }

    /// Register an alias of an existing parameter under the same storage.
    /// Listed once; additional call sites come from cloning the handle.
    pub fn adopt(&mut self, p: &Parameter<T>) {
        self.params.push(p.clone());
    }

    pub fn gaussian(&mut self, name: &str, shape: &[usize], std: f64) -> Parameter<T> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("valid std");
        let data: Vec<T> =
            (0..n).map(|_| T::from_f64(dist.sample(&mut self.rng))).collect();
        self.push(Parameter::new(name, shape, data))
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Parameter<T> {
        self.push(Parameter::new(name, shape, vec![T::zero(); shape.iter().product()]))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Parameter<T> {
        self.push(Parameter::new(name, shape, vec![T::one(); shape.iter().product()]))
    }

    /// He-normal for conv kernels \[O×C×kh×kw\]: std = √(2 / (C·kh·kw)).
    pub fn he_conv(&mut self, name: &str, shape: &[usize; 4]) -> Parameter<T> {
        let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
        self.gaussian(name, shape, (2.0 / fan_in).sqrt())
    }

    /// Xavier-normal for linear maps \[in×out\]: std = √(2 / (in+out)).
    pub fn xavier(&mut self, name: &str, shape: &[usize; 2]) -> Parameter<T> {
        let std = (2.0 / (shape[0] + shape[1]) as f64).sqrt();
        self.gaussian(name, shape, std)
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn into_params(self) -> Vec<Parameter<T>> {
        self.params
    }
}

/// Affine map over the last axis.
pub struct Linear<T: Elem> {
    pub w: Parameter<T>,
    pub b: Parameter<T>,
}

impl<T: Elem> Linear<T> {
    pub fn new(pb: &mut ParamBuilder<T>, prefix: &str, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: pb.xavier(&format!("{prefix}.w"), &[in_dim, out_dim]),
            b: pb.zeros(&format!("{prefix}.b"), &[out_dim]),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        ops::linear(x, &self.w.leaf(), &self.b.leaf())
    }
}

/// Learned per-feature normalisation of the last axis.
pub struct LayerNorm<T: Elem> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub eps: f64,
}

impl<T: Elem> LayerNorm<T> {
    pub fn new(pb: &mut ParamBuilder<T>, prefix: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: pb.ones(&format!("{prefix}.gamma"), &[dim]),
            beta: pb.zeros(&format!("{prefix}.beta"), &[dim]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        ops::layer_norm(x, &self.gamma.leaf(), &self.beta.leaf(), self.eps)
    }
}
