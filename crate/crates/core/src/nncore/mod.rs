//! Differentiable kernels with explicit forward/backward pairs.
//!
//! Every forward that supports a backward returns a tape object; the
//! backward consumes it. Empty (default) tapes are rejected with
//! [`Error::NoTape`](crate::error::Error::NoTape).

mod affine;
mod dropout;
pub mod gradcheck;
mod lstm;
mod params;
mod pool;

pub use affine::{affine_softmax, log_sum_exp, softmax, softmax_cross_entropy, AffineParams};
pub use dropout::{dropout_backward, DropoutSpec, DropoutTape, Mode};
pub use lstm::{sigmoid, BiLstmParams, BiLstmTape, LstmParams, LstmTape, FORGET_BIAS};
pub use params::{glorot_uniform, ParamSet, TensorMut, TensorRef};
pub use pool::{span_max_pool, span_max_pool_backward, PoolTape};

pub(crate) use params::{tensor1, tensor1_mut, tensor2, tensor2_mut};

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        LstmParams::tensors(self, "lstm")
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        LstmParams::tensors_mut(self, "lstm")
    }
}

impl ParamSet for BiLstmParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        BiLstmParams::tensors(self, "bilstm")
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        BiLstmParams::tensors_mut(self, "bilstm")
    }
}

impl ParamSet for AffineParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        AffineParams::tensors(self, "affine")
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        AffineParams::tensors_mut(self, "affine")
    }
}
