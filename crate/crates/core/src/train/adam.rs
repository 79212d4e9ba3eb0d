//! Adam with bias correction over the model's parameter registry.
//!
//! Moment buffers are keyed by storage, so a weight shared across call
//! sites owns exactly one state entry and is updated exactly once per
//! step, from the sum of its per-site gradients.

use std::collections::HashSet;

use crate::autodiff::{Elem, Parameter};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct MomentEntry<T: Elem> {
    /// Canonical (first-registered) name, used by checkpoints.
    name: String,
    storage_id: u64,
    m: Vec<T>,
    v: Vec<T>,
}

pub struct AdamState<T: Elem> {
    step: u64,
    entries: Vec<MomentEntry<T>>,
}

impl<T: Elem> AdamState<T> {
    pub fn new(params: &[Parameter<T>]) -> Self {
        let mut seen = HashSet::new();
        let entries = params
            .iter()
            .filter(|p| seen.insert(p.storage_id()))
            .map(|p| MomentEntry {
                name: p.name().to_string(),
                storage_id: p.storage_id(),
                m: vec![T::zero(); p.numel()],
                v: vec![T::zero(); p.numel()],
            })
            .collect();
        AdamState { step: 0, entries }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One optimizer step over the accumulated gradients. Parameters are
    /// deduplicated by storage; call `zero_grads` afterwards.
    pub fn step(&mut self, params: &[Parameter<T>], lr: f64) {
        self.step += 1;
        let b1 = T::from_f64(BETA1);
        let b2 = T::from_f64(BETA2);
        let one = T::one();
        let bias1 = T::from_f64(1.0 - BETA1.powi(self.step as i32));
        let bias2 = T::from_f64(1.0 - BETA2.powi(self.step as i32));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(EPS);

        let mut seen = HashSet::new();
        for p in params.iter().filter(|p| seen.insert(p.storage_id())) {
            let entry = self
                .entries
                .iter_mut()
                .find(|e| e.storage_id == p.storage_id())
                .unwrap_or_else(|| panic!("adam contract error: unknown parameter {}", p.name()));
            let grad = p.grad();
            assert_eq!(
                grad.len(),
                entry.m.len(),
                "adam contract error: gradient size mismatch for {}",
                p.name()
            );
            let (m, v) = (&mut entry.m, &mut entry.v);
            p.update(|i, value| {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                value - lr_t * m_hat / (v_hat.sqrt() + eps)
            });
        }
    }

    /// Canonical names and buffers, for checkpointing.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &[T], &[T])> {
        self.entries.iter().map(|e| (e.name.as_str(), e.m.as_slice(), e.v.as_slice()))
    }

    pub(crate) fn restore_moment(&mut self, name: &str, m: Vec<T>, v: Vec<T>) -> bool {
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) if e.m.len() == m.len() && e.v.len() == v.len() => {
                e.m = m;
                e.v = v;
                true
            }
            _ => false,
        }
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }
}

/// Scale gradients so their global L2 norm does not exceed `max_norm`.
/// Shared storages contribute once.
pub fn clip_global_norm<T: Elem>(params: &[Parameter<T>], max_norm: f64) {
    let mut seen = HashSet::new();
    let unique: Vec<&Parameter<T>> =
        params.iter().filter(|p| seen.insert(p.storage_id())).collect();
    let norm: f64 = unique.iter().map(|p| p.grad_sq_sum()).sum::<f64>().sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        for p in unique {
            p.scale_grad(factor);
        }
    }
}
