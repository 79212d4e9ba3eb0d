//! Named trainable parameters with shared-storage identity.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::elem::Elem;
use super::tensor::Tensor;

static NEXT_STORAGE_ID: AtomicU64 = AtomicU64::new(1);

/// Value and gradient buffers behind one or more parameters. Two
/// parameters holding the same `Storage` read and write the same values
/// and accumulate into the same gradient buffer.
pub struct Storage<T: Elem> {
    id: u64,
    data: RefCell<Vec<T>>,
    grad: RefCell<Vec<T>>,
}

/// A named, trainable tensor. Cloning shares storage; use
/// [`Parameter::clone`] to create additional call sites of a shared
/// weight.
#[derive(Clone)]
pub struct Parameter<T: Elem> {
    name: String,
    shape: Vec<usize>,
    storage: Rc<Storage<T>>,
}

impl<T: Elem> Parameter<T> {
    pub fn new(name: &str, shape: &[usize], data: Vec<T>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "parameter {name}: data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Parameter {
            name: name.to_string(),
            shape: shape.to_vec(),
            storage: Rc::new(Storage {
                id: NEXT_STORAGE_ID.fetch_add(1, Ordering::Relaxed),
                grad: RefCell::new(vec![T::zero(); numel]),
                data: RefCell::new(data),
            }),
        }
    }

    /// Zero-initialised parameter; mainly for tests and bias vectors.
    pub fn gaussian_like_zeros(name: &str, shape: &[usize]) -> Self {
        Self::new(name, shape, vec![T::zero(); shape.iter().product()])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Identity token of the underlying storage; equal ids mean shared
    /// values and a shared gradient buffer.
    pub fn storage_id(&self) -> u64 {
        self.storage.id
    }

    /// Enter the computation graph at a call site. Each call snapshots the
    /// current values; the gradient of every snapshot flows back into this
    /// parameter's storage.
    pub fn leaf(&self) -> Tensor<T> {
        Tensor::param_leaf(self.shape.clone(), self.storage.data.borrow().clone(), self.clone())
    }

    pub fn value(&self) -> Vec<T> {
        self.storage.data.borrow().clone()
    }

    pub fn set_value(&self, data: &[T]) {
        let mut buf = self.storage.data.borrow_mut();
        assert_eq!(buf.len(), data.len(), "parameter {}: value length mismatch", self.name);
        buf.copy_from_slice(data);
    }

    /// In-place update, used by optimizers.
    pub fn update<F: FnMut(usize, T) -> T>(&self, mut f: F) {
        let mut buf = self.storage.data.borrow_mut();
        for (i, v) in buf.iter_mut().enumerate() {
            *v = f(i, *v);
        }
    }

    /// Nudge one coordinate; used by the finite-difference checker.
    pub fn perturb(&self, index: usize, delta: T) {
        let mut buf = self.storage.data.borrow_mut();
        buf[index] = buf[index] + delta;
    }

    pub fn grad(&self) -> Vec<T> {
        self.storage.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        for g in self.storage.grad.borrow_mut().iter_mut() {
            *g = T::zero();
        }
    }

    pub(crate) fn accumulate_storage_grad(&self, g: &[T]) {
        let mut buf = self.storage.grad.borrow_mut();
        assert_eq!(buf.len(), g.len(), "parameter {}: gradient length mismatch", self.name);
        for (b, gi) in buf.iter_mut().zip(g) {
            *b = *b + *gi;
        }
    }

    /// Global-norm contribution (sum of squared gradient entries).
    pub fn grad_sq_sum(&self) -> f64 {
        self.storage.grad.borrow().iter().map(|g| g.as_f64() * g.as_f64()).sum()
    }

    /// Scale the stored gradient in place (gradient clipping).
    pub fn scale_grad(&self, factor: f64) {
        let f = T::from_f64(factor);
        for g in self.storage.grad.borrow_mut().iter_mut() {
            *g = *g * f;
        }
    }
}

impl<T: Elem> std::fmt::Debug for Parameter<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Parameter")
            .field("name", &self.name)
            .field("shape", &self.shape)
            .field("storage_id", &self.storage.id)
            .finish()
    }
}
