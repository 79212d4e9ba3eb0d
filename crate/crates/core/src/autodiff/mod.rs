//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A computation graph is built dynamically during the forward pass: every
//! differentiable operation allocates a fresh node holding its output
//! values, handles to its inputs and a backward rule. [`backward`] walks
//! the graph in reverse topological order, accumulating gradients into
//! node buffers and, for parameter leaves, into the shared
//! [`Storage`](param::Storage) so that a weight referenced from several
//! call sites receives the sum of all contributions.
//!
//! Gradients accumulate across backward passes; call
//! [`Parameter::zero_grad`](param::Parameter::zero_grad) (or a model-level
//! equivalent) between optimizer steps. Graphs are freed when the last
//! tensor handle drops.

mod elem;
mod gradcheck;
mod param;
mod tensor;

pub mod conv;
pub mod ops;

pub use elem::{Dtype, Elem};
pub use gradcheck::{grad_check, GradCheckReport, ParamReport};
pub use param::{Parameter, Storage};
pub use tensor::{backward, Tensor};
