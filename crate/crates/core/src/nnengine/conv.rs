//! Strided, dilated 1D convolution.
//!
//! Weights are laid out `[kernel][in_channel][out_channel]` so that both the
//! forward pass and the weight gradient reduce to contiguous `axpy` calls over
//! output channels.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::param::join;
use super::{axpy, dot, ParamSlot, Parameterized, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub dilation: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        dilation: usize,
    ) -> Result<Self> {
        if kernel_size == 0 || stride == 0 || dilation == 0 {
            return Err(Error::Config(format!(
                "conv needs kernel_size, stride, dilation >= 1 (got {kernel_size}, {stride}, {dilation})"
            )));
        }
        Ok(Self {
            kernel_size,
            in_channels,
            out_channels,
            stride,
            dilation,
            weights: vec![T::zero(); kernel_size * in_channels * out_channels],
            bias: vec![T::zero(); out_channels],
        })
    }

    /// Fan-in scaled normal weights (variance `2 / fan_in`), zero bias.
    pub fn init_fan_in<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = (self.kernel_size * self.in_channels).max(1) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        for w in &mut self.weights {
            *w = T::of(normal.sample(rng));
        }
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    #[inline]
    pub fn weight_index(&self, k: usize, i: usize, o: usize) -> usize {
        (k * self.in_channels + i) * self.out_channels + o
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.kernel_size * self.in_channels * self.out_channels
            || self.bias.len() != self.out_channels
        {
            return Err(Error::shape(
                "ConvParams",
                format!(
                    "{} weights and {} biases",
                    self.kernel_size * self.in_channels * self.out_channels,
                    self.out_channels
                ),
                format!(
                    "{} weights and {} biases",
                    self.weights.len(),
                    self.bias.len()
                ),
            ));
        }
        Ok(())
    }
}

/// `floor((length + 2 padding - dilation (kernel - 1) - 1) / stride) + 1`.
pub fn conv_output_length(
    length: usize,
    padding: usize,
    kernel_size: usize,
    dilation: usize,
    stride: usize,
) -> Result<usize> {
    let span = dilation * (kernel_size - 1) + 1;
    let padded = length + 2 * padding;
    if padded < span {
        return Err(Error::shape(
            "conv1d input length",
            format!("at least {span} after padding"),
            padded,
        ));
    }
    Ok((padded - span) / stride + 1)
}

fn check_input<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<()> {
    params.validate()?;
    if input.channels() != params.in_channels {
        return Err(Error::shape(
            "conv1d input channels",
            params.in_channels,
            input.channels(),
        ));
    }
    Ok(())
}

/// Zero-padded convolution; each output is the dilated dot product plus bias.
pub fn conv1d_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    padding: usize,
) -> Result<Tensor<T>> {
    check_input(input, params)?;
    let out_len = conv_output_length(
        input.length(),
        padding,
        params.kernel_size,
        params.dilation,
        params.stride,
    )?;
    let (ic, oc) = (params.in_channels, params.out_channels);
    let mut out = Tensor::zeros(out_len, oc);
    for t in 0..out_len {
        let row = out.row_mut(t);
        row.copy_from_slice(&params.bias);
        for k in 0..params.kernel_size {
            let pos = t * params.stride + k * params.dilation;
            if pos < padding || pos - padding >= input.length() {
                continue;
            }
            let x = input.row(pos - padding);
            let wk = &params.weights[k * ic * oc..(k + 1) * ic * oc];
            for (i, &xv) in x.iter().enumerate() {
                axpy(xv, &wk[i * oc..(i + 1) * oc], row);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrads<T> {
    pub fn zeros_like(params: &ConvParams<T>) -> Self {
        Self {
            weights: vec![T::zero(); params.weights.len()],
            bias: vec![T::zero(); params.bias.len()],
        }
    }
}

/// Gradients of `sum(grad_out * conv1d_forward(input))`.
pub fn conv1d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    padding: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, ConvGrads<T>)> {
    let mut grads = ConvGrads::zeros_like(params);
    let grad_in = conv1d_backward_into(input, params, padding, grad_out, &mut grads)?;
    Ok((grad_in, grads))
}

pub(crate) fn conv1d_backward_into<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    padding: usize,
    grad_out: &Tensor<T>,
    grads: &mut ConvGrads<T>,
) -> Result<Tensor<T>> {
    check_input(input, params)?;
    let out_len = conv_output_length(
        input.length(),
        padding,
        params.kernel_size,
        params.dilation,
        params.stride,
    )?;
    grad_out.expect_shape((out_len, params.out_channels), "conv1d_backward grad_out")?;
    let (ic, oc) = (params.in_channels, params.out_channels);
    let mut grad_in = Tensor::zeros(input.length(), ic);
    for t in 0..out_len {
        let g = grad_out.row(t);
        axpy(T::one(), g, &mut grads.bias);
        for k in 0..params.kernel_size {
            let pos = t * params.stride + k * params.dilation;
            if pos < padding || pos - padding >= input.length() {
                continue;
            }
            let src = pos - padding;
            let x = input.row(src);
            let base = k * ic * oc;
            let gin = grad_in.row_mut(src);
            for i in 0..ic {
                let w = &params.weights[base + i * oc..base + (i + 1) * oc];
                gin[i] += dot(w, g);
                axpy(
                    x[i],
                    g,
                    &mut grads.weights[base + i * oc..base + (i + 1) * oc],
                );
            }
        }
    }
    Ok(grad_in)
}

/// Convolution layer: parameters, accumulated gradients and fixed padding.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub params: ConvParams<T>,
    pub grads: ConvGrads<T>,
    pub padding: usize,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params =
            ConvParams::zeros(kernel_size, in_channels, out_channels, stride, dilation)?;
        params.init_fan_in(rng);
        let grads = ConvGrads::zeros_like(&params);
        Ok(Self {
            params,
            grads,
            padding,
        })
    }

    /// Padding that keeps the length unchanged at stride 1.
    pub fn same_padding(kernel_size: usize, dilation: usize) -> usize {
        dilation * (kernel_size - 1) / 2
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv1d_forward(input, &self.params, self.padding)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        conv1d_backward_into(input, &self.params, self.padding, grad_out, &mut self.grads)
    }
}

impl<T: Scalar> Parameterized<T> for Conv1d<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        let p = &mut self.params;
        f(ParamSlot {
            name: join(prefix, "weight"),
            shape: vec![p.kernel_size, p.in_channels, p.out_channels],
            value: &mut p.weights,
            grad: Some(&mut self.grads.weights),
        });
        f(ParamSlot {
            name: join(prefix, "bias"),
            shape: vec![p.out_channels],
            value: &mut p.bias,
            grad: Some(&mut self.grads.bias),
        });
    }
}
