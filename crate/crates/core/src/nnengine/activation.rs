use super::{Scalar, Tensor};
use crate::error::Result;

/// `max(0, x)`.
pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Routes `grad_out` through the positive part of the forward output.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(output.shape(), "relu_backward")?;
    let mut g = grad_out.clone();
    for (gi, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= T::zero() {
            *gi = T::zero();
        }
    }
    Ok(g)
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(output.shape(), "sigmoid_backward")?;
    let mut g = grad_out.clone();
    for (gi, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gi *= y * (T::one() - y);
    }
    Ok(g)
}
