//! Batch normalization over the timestep axis.
//!
//! A training batch is a single segment, so the normalization population of
//! each channel is the set of timesteps of that segment.

use super::param::join;
use super::{ParamSlot, Parameterized, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<T: Scalar> BatchNormParams<T> {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            scale: vec![T::one(); channels],
            shift: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

/// Everything the backward pass needs from a train-mode forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn check_channels<T: Scalar>(input: &Tensor<T>, params: &BatchNormParams<T>) -> Result<()> {
    if input.channels() != params.channels() {
        return Err(Error::shape(
            "batchnorm channels",
            params.channels(),
            input.channels(),
        ));
    }
    Ok(())
}

/// Forward pass without touching running statistics. Train mode returns the
/// cache for [`batchnorm_backward`]; infer mode returns `None`.
pub(crate) fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    check_channels(input, params)?;
    let (len, ch) = input.shape();
    let eps = T::of(params.epsilon);
    match mode {
        Mode::Infer => {
            let inv: Vec<T> = params
                .running_var
                .iter()
                .map(|&v| T::one() / (v + eps).sqrt())
                .collect();
            let mut out = Tensor::zeros(len, ch);
            for t in 0..len {
                let x = input.row(t);
                let y = out.row_mut(t);
                for c in 0..ch {
                    y[c] = params.scale[c] * (x[c] - params.running_mean[c]) * inv[c]
                        + params.shift[c];
                }
            }
            Ok((out, None))
        }
        Mode::Train => {
            if len < 2 {
                return Err(Error::DegenerateBatch(len));
            }
            let n = T::of(len as f64);
            let mut mean = vec![T::zero(); ch];
            for t in 0..len {
                for (m, &x) in mean.iter_mut().zip(input.row(t)) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / n);
            let mut var = vec![T::zero(); ch];
            for t in 0..len {
                for ((v, &x), &m) in var.iter_mut().zip(input.row(t)).zip(&mean) {
                    let d = x - m;
                    *v += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / n);
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let mut normalized = Tensor::zeros(len, ch);
            let mut out = Tensor::zeros(len, ch);
            for t in 0..len {
                let x = input.row(t);
                let xh = normalized.row_mut(t);
                for c in 0..ch {
                    xh[c] = (x[c] - mean[c]) * inv_std[c];
                }
                let xh = normalized.row(t);
                let y = out.row_mut(t);
                for c in 0..ch {
                    y[c] = params.scale[c] * xh[c] + params.shift[c];
                }
            }
            Ok((
                out,
                Some(BatchNormCache {
                    normalized,
                    inv_std,
                    mean,
                    var,
                }),
            ))
        }
    }
}

pub(crate) fn update_running<T: Scalar>(
    params: &mut BatchNormParams<T>,
    cache: &BatchNormCache<T>,
) {
    let m = T::of(params.momentum);
    let one_m = T::one() - m;
    for c in 0..params.channels() {
        params.running_mean[c] = m * params.running_mean[c] + one_m * cache.mean[c];
        params.running_var[c] = m * params.running_var[c] + one_m * cache.var[c];
    }
}

/// Normalizes `input`. Train mode uses batch statistics and folds them into
/// the running averages; infer mode uses the running averages only.
pub fn batchnorm<T: Scalar>(
    input: &Tensor<T>,
    params: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    let (out, cache) = batchnorm_forward(input, params, mode)?;
    if let Some(c) = &cache {
        update_running(params, c);
    }
    Ok((out, cache))
}

/// Returns `(grad_input, grad_scale, grad_shift)` for a train-mode forward.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    params: &BatchNormParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    grad_out.expect_shape(cache.normalized.shape(), "batchnorm_backward grad_out")?;
    let (len, ch) = grad_out.shape();
    let mut g_scale = vec![T::zero(); ch];
    let mut g_shift = vec![T::zero(); ch];
    for t in 0..len {
        let g = grad_out.row(t);
        let xh = cache.normalized.row(t);
        for c in 0..ch {
            g_shift[c] += g[c];
            g_scale[c] += g[c] * xh[c];
        }
    }
    let n = T::of(len as f64);
    let mut grad_in = Tensor::zeros(len, ch);
    for t in 0..len {
        let g = grad_out.row(t);
        let xh = cache.normalized.row(t);
        let gi = grad_in.row_mut(t);
        for c in 0..ch {
            let k = params.scale[c] * cache.inv_std[c] / n;
            gi[c] = k * (n * g[c] - g_shift[c] - xh[c] * g_scale[c]);
        }
    }
    Ok((grad_in, g_scale, g_shift))
}

/// Batch-norm layer with gradient accumulators.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub params: BatchNormParams<T>,
    pub grad_scale: Vec<T>,
    pub grad_shift: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            params: BatchNormParams::new(channels),
            grad_scale: vec![T::zero(); channels],
            grad_shift: vec![T::zero(); channels],
        }
    }

    /// Read-only forward; running statistics are folded in by
    /// [`BatchNorm::backward`] so one parameter set can serve several inputs.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        mode: Mode,
    ) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
        batchnorm_forward(input, &self.params, mode)
    }

    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        update_running(&mut self.params, cache);
    }

    /// Accumulates scale/shift gradients, updates running statistics from
    /// the cached batch, and returns the input gradient.
    pub fn backward(
        &mut self,
        cache: &BatchNormCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (gi, gs, gb) = batchnorm_backward(cache, &self.params, grad_out)?;
        for (a, b) in self.grad_scale.iter_mut().zip(gs) {
            *a += b;
        }
        for (a, b) in self.grad_shift.iter_mut().zip(gb) {
            *a += b;
        }
        self.update_running(cache);
        Ok(gi)
    }
}

impl<T: Scalar> Parameterized<T> for BatchNorm<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        let ch = self.params.channels();
        f(ParamSlot {
            name: join(prefix, "scale"),
            shape: vec![ch],
            value: &mut self.params.scale,
            grad: Some(&mut self.grad_scale),
        });
        f(ParamSlot {
            name: join(prefix, "shift"),
            shape: vec![ch],
            value: &mut self.params.shift,
            grad: Some(&mut self.grad_shift),
        });
        f(ParamSlot {
            name: join(prefix, "running_mean"),
            shape: vec![ch],
            value: &mut self.params.running_mean,
            grad: None,
        });
        f(ParamSlot {
            name: join(prefix, "running_var"),
            shape: vec![ch],
            value: &mut self.params.running_var,
            grad: None,
        });
    }
}
