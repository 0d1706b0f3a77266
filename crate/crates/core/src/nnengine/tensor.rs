use crate::error::{Error, Result};

use super::Scalar;

/// Dense `(length x channels)` array stored timestep-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    length: usize,
    channels: usize,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(length: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != length * channels {
            return Err(Error::shape(
                "Tensor::new",
                format!("{} values ({length} x {channels})", length * channels),
                data.len(),
            ));
        }
        Ok(Self {
            length,
            channels,
            data,
            grad: None,
        })
    }

    pub fn zeros(length: usize, channels: usize) -> Self {
        Self {
            length,
            channels,
            data: vec![T::zero(); length * channels],
            grad: None,
        }
    }

    /// Single-channel tensor from a signal.
    pub fn from_signal(samples: &[T]) -> Self {
        Self {
            length: samples.len(),
            channels: 1,
            data: samples.to_vec(),
            grad: None,
        }
    }

    pub fn from_fn(length: usize, channels: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(length * channels);
        for t in 0..length {
            for c in 0..channels {
                data.push(f(t, c));
            }
        }
        Self {
            length,
            channels,
            data,
            grad: None,
        }
    }

    #[inline]
    pub fn length(&self) -> usize {
        self.length
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.length, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [T] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> T {
        self.data[t * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, v: T) {
        self.data[t * self.channels + c] = v;
    }

    /// Values of one channel across all timesteps.
    pub fn channel(&self, c: usize) -> Vec<T> {
        (0..self.length).map(|t| self.get(t, c)).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            length: self.length,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.expect_shape(other.shape(), "Tensor::add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Sum of the elementwise product, the scalar loss used by gradient checks.
    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        self.expect_shape(other.shape(), "Tensor::dot")?;
        Ok(super::dot(&self.data, &other.data))
    }

    pub fn expect_shape(&self, shape: (usize, usize), context: &'static str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::shape(
                context,
                format!("{} x {}", shape.0, shape.1),
                format!("{} x {}", self.length, self.channels),
            ));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            length: self.length,
            channels: self.channels,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
            grad: None,
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn take_grad(&mut self) -> Option<Tensor<T>> {
        self.grad.take().map(|g| Tensor {
            length: self.length,
            channels: self.channels,
            data: g,
            grad: None,
        })
    }
}
