//! Dense-tensor engine with reverse-mode differentiation.
//!
//! The engine covers exactly the operations the two classifier architectures
//! need. A forward pass records nodes on a [`Tape`]; [`Tape::backward`]
//! replays the recorded vector-Jacobian products in reverse order. Parameters
//! live outside the tape as [`ParamLeaf`] values and are re-inserted as leaves
//! on every pass, which keeps graphs single-use by construction.

mod adam;
mod ops;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use adam::{adam_step, AdamState};
pub use ops::{
    add, batch_norm2d, concat_features, conv2d_3x3, cross_entropy_loss, dropout, layer_norm,
    linear, matmul, mean_last_axis, mul_scalar, relu, softmax_axis, squeeze_last, sum_all,
    swap_last_axes, transpose2d, BatchNormState, Mode,
};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// One learnable array: value and accumulated gradient of identical shape.
#[derive(Clone, Debug)]
pub struct ParamLeaf {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl ParamLeaf {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        ParamLeaf {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}
