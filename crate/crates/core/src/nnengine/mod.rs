//! A small differentiable engine for `(length x channels)` feature maps.
//!
//! Every layer comes as a forward/backward pair of plain functions plus, where
//! it carries weights, a layer struct that accumulates parameter gradients.
//! Forward passes return an explicit cache; the caller hands it back to the
//! matching backward. This lets one set of weights be applied to several
//! inputs in a single step (the shared detection head does exactly that).

mod activation;
mod adam;
mod batchnorm;
mod concat;
mod conv;
pub mod fragments;
mod gradcheck;
pub(crate) mod param;
mod pool;
mod tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use adam::{AdamConfig, AdamState};
pub(crate) use batchnorm::batchnorm_forward;
pub use batchnorm::{
    batchnorm, batchnorm_backward, BatchNorm, BatchNormCache, BatchNormParams, Mode,
};
pub use concat::{concat_channels, split_channels};
pub use conv::{
    conv1d_backward, conv1d_forward, conv_output_length, Conv1d, ConvGrads, ConvParams,
};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GradFragment};
pub use param::{clip_grad_norm, count_params, grad_norm, zero_grads, ParamSlot, Parameterized};
pub use pool::{avgpool1d, avgpool1d_backward, maxpool1d, maxpool1d_backward, MaxPoolCache};
pub use tensor::Tensor;

/// Floating point element type of the engine (`f32` for training, `f64` for
/// gradient checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 fits in scalar")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `y += a * x`, written so the compiler can vectorize it.
#[inline]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}
