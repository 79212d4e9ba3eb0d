//! Dense row-major tensors and the dynamic computation graph.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::elem::Elem;
use super::param::Parameter;

static NEXT_NODE_ID: AtomicU64 = AtomicU64::new(1);

/// Arguments handed to a backward rule.
pub(crate) struct BackwardArgs<'a, T: Elem> {
    /// Gradient of the loss with respect to this node's output.
    pub grad_out: &'a [T],
    /// The node's forward output values.
    pub out_data: &'a [T],
}

/// Backward rule: given the output gradient and the node's inputs, return
/// one gradient buffer per input (`None` marks a non-differentiable
/// input slot).
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&BackwardArgs<'_, T>, &[Tensor<T>]) -> Vec<Option<Vec<T>>>>;

pub(crate) struct OpRecord<T: Elem> {
    pub inputs: Vec<Tensor<T>>,
    pub backward: BackwardFn<T>,
}

pub(crate) struct Inner<T: Elem> {
    pub id: u64,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// Gradient accumulated during [`backward`]; lives for the life of the
    /// node so probes can inspect intermediate gradients afterwards.
    pub grad: RefCell<Option<Vec<T>>>,
    pub op: Option<OpRecord<T>>,
    /// Parameter leaf: gradients additionally accumulate into the shared
    /// parameter storage.
    pub sink: Option<Parameter<T>>,
}

/// An n-dimensional array participating in the computation graph.
///
/// Cloning is cheap (reference-counted). Values are immutable after
/// creation; only the gradient buffer is written, during [`backward`].
#[derive(Clone)]
pub struct Tensor<T: Elem> {
    pub(crate) inner: Rc<Inner<T>>,
}

impl<T: Elem> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        data: Vec<T>,
        op: Option<OpRecord<T>>,
        sink: Option<Parameter<T>>,
    ) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_NODE_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: RefCell::new(None),
                op,
                sink,
            }),
        }
    }

    /// Leaf tensor outside the differentiable graph.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        Self::build(shape.to_vec(), data, None, None)
    }

    pub fn from_f64s(shape: &[usize], data: &[f64]) -> Self {
        Self::from_vec(shape, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(shape, vec![T::zero(); shape.iter().product()])
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::from_vec(shape, vec![v; shape.iter().product()])
    }

    pub fn scalar(v: T) -> Self {
        Self::from_vec(&[1], vec![v])
    }

    /// Result of an operation; records the backward rule.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        Self::build(shape, data, Some(OpRecord { inputs, backward }), None)
    }

    /// Parameter leaf: a value snapshot whose gradient flows into the
    /// parameter's shared storage.
    pub(crate) fn param_leaf(shape: Vec<usize>, data: Vec<T>, param: Parameter<T>) -> Self {
        Self::build(shape, data, None, Some(param))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Gradient accumulated by the last [`backward`] pass, if this node was
    /// reached.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.as_f64()).collect()
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, gi) in buf.iter_mut().zip(g) {
                    *b = *b + *gi;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }
}

impl<T: Elem> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("data", &self.inner.data)
            .finish()
    }
}

/// Propagate gradients from a scalar loss through the recorded graph.
///
/// Gradients are added (never overwritten) into every reachable node and
/// into the storage of every reachable [`Parameter`]; a parameter used at
/// k call sites receives the sum of the k per-site contributions.
pub fn backward<T: Elem>(loss: &Tensor<T>) {
    assert_eq!(
        loss.numel(),
        1,
        "backward requires a scalar loss, got shape {:?}",
        loss.shape()
    );

    let order = topo_order(loss);
    loss.accumulate_grad(&[T::one()]);

    for node in order.iter().rev() {
        let grad = node.inner.grad.borrow().clone();
        let Some(grad) = grad else { continue };

        if let Some(op) = &node.inner.op {
            let args = BackwardArgs { grad_out: &grad, out_data: &node.inner.data };
            let input_grads = (op.backward)(&args, &op.inputs);
            assert_eq!(
                input_grads.len(),
                op.inputs.len(),
                "backward rule returned {} gradients for {} inputs",
                input_grads.len(),
                op.inputs.len()
            );
            for (input, ig) in op.inputs.iter().zip(input_grads) {
                if let Some(ig) = ig {
                    assert_eq!(
                        ig.len(),
                        input.numel(),
                        "gradient length {} does not match input shape {:?}",
                        ig.len(),
                        input.shape()
                    );
                    input.accumulate_grad(&ig);
                }
            }
        }

        if let Some(param) = &node.inner.sink {
            param.accumulate_storage_grad(&grad);
        }
    }
}

/// Post-order DFS over the graph; reversing it yields a valid order for
/// gradient propagation.
fn topo_order<T: Elem>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    // (node, next child index) emulates recursion.
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(root.clone(), 0)];
    visited.insert(root.inner.id);

    while let Some((node, child_idx)) = stack.pop() {
        let children: &[Tensor<T>] = match &node.inner.op {
            Some(op) => &op.inputs,
            None => &[],
        };
        if child_idx < children.len() {
            let child = children[child_idx].clone();
            stack.push((node, child_idx + 1));
            if visited.insert(child.inner.id) {
                stack.push((child, 0));
            }
        } else {
            order.push(node);
        }
    }
    order
}
