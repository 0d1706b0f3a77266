//! Ready-made [`GradFragment`]s for every layer type, used by the gradient
//! check suite and the `gradcheck` command.

use rand::Rng;

use super::param::join;
use super::{
    avgpool1d, avgpool1d_backward, concat_channels, maxpool1d, maxpool1d_backward, relu,
    relu_backward, sigmoid, sigmoid_backward, split_channels, BatchNorm, BatchNormCache, Conv1d,
    GradFragment, MaxPoolCache, Mode, ParamSlot, Parameterized, Scalar, Tensor,
};
use crate::error::{Error, Result};

pub(crate) fn missing_forward() -> Error {
    Error::InvalidArgument("backward called before forward".into())
}

pub(crate) fn positive_mask<T: Scalar>(t: &Tensor<T>) -> Vec<u64> {
    t.data()
        .chunks(64)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &v)| acc | (u64::from(v > T::zero()) << i))
        })
        .collect()
}

pub struct ConvFragment<T> {
    pub conv: Conv1d<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvFragment<T> {
    pub fn new(conv: Conv1d<T>) -> Self {
        Self { conv, input: None }
    }

    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        kernel: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Result<Self> {
        let mut conv = Conv1d::new(kernel, cin, cout, stride, dilation, padding, rng)?;
        conv.params
            .bias
            .iter_mut()
            .for_each(|b| *b = T::of(rng.gen_range(-0.5..0.5)));
        Ok(Self::new(conv))
    }
}

impl<T: Scalar> Parameterized<T> for ConvFragment<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
    }
}

impl<T: Scalar> GradFragment<T> for ConvFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.input = Some(input.clone());
        self.conv.forward(input)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.input.as_ref().ok_or_else(missing_forward)?;
        self.conv.backward(input, grad_out)
    }
}

pub struct BatchNormFragment<T> {
    pub bn: BatchNorm<T>,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Scalar> BatchNormFragment<T> {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, channels: usize) -> Self {
        let mut bn = BatchNorm::new(channels);
        for c in 0..channels {
            bn.params.scale[c] = T::of(rng.gen_range(0.5..1.5));
            bn.params.shift[c] = T::of(rng.gen_range(-0.5..0.5));
        }
        Self { bn, cache: None }
    }
}

impl<T: Scalar> Parameterized<T> for BatchNormFragment<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.bn.visit_params(&join(prefix, "bn"), f);
    }
}

impl<T: Scalar> GradFragment<T> for BatchNormFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, cache) = self.bn.forward(input, Mode::Train)?;
        self.cache = cache;
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(missing_forward)?;
        self.bn.backward(&cache, grad_out)
    }
}

/// Parameter-free elementwise and pooling layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stateless {
    Relu,
    Sigmoid,
    MaxPool {
        size: usize,
        stride: usize,
        padding: usize,
    },
    AvgPool {
        size: usize,
        stride: usize,
    },
}

pub struct StatelessFragment<T> {
    pub kind: Stateless,
    input: Option<Tensor<T>>,
    output: Option<Tensor<T>>,
    pool: Option<MaxPoolCache>,
}

impl<T: Scalar> StatelessFragment<T> {
    pub fn new(kind: Stateless) -> Self {
        Self {
            kind,
            input: None,
            output: None,
            pool: None,
        }
    }
}

impl<T: Scalar> Parameterized<T> for StatelessFragment<T> {
    fn visit_params(&mut self, _prefix: &str, _f: &mut dyn FnMut(ParamSlot<'_, T>)) {}
}

impl<T: Scalar> GradFragment<T> for StatelessFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = match self.kind {
            Stateless::Relu => relu(input),
            Stateless::Sigmoid => sigmoid(input),
            Stateless::MaxPool {
                size,
                stride,
                padding,
            } => {
                let (out, cache) = maxpool1d(input, size, stride, padding)?;
                self.pool = Some(cache);
                out
            }
            Stateless::AvgPool { size, stride } => avgpool1d(input, size, stride)?,
        };
        self.input = Some(input.clone());
        self.output = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.output.as_ref().ok_or_else(missing_forward)?;
        match self.kind {
            Stateless::Relu => relu_backward(out, grad_out),
            Stateless::Sigmoid => sigmoid_backward(out, grad_out),
            Stateless::MaxPool { .. } => {
                maxpool1d_backward(self.pool.as_ref().ok_or_else(missing_forward)?, grad_out)
            }
            Stateless::AvgPool { size, stride } => {
                let len = self.input.as_ref().ok_or_else(missing_forward)?.length();
                avgpool1d_backward(len, size, stride, grad_out)
            }
        }
    }

    fn kink_signature(&self) -> Vec<u64> {
        match (self.kind, &self.input, &self.pool) {
            (Stateless::Relu, Some(x), _) => positive_mask(x),
            (Stateless::MaxPool { .. }, _, Some(p)) => p.argmax.iter().map(|&i| i as u64).collect(),
            _ => Vec::new(),
        }
    }
}

/// `concat(x, conv(x))`: exercises gradient fan-in through concatenation.
pub struct ConcatFragment<T> {
    pub conv: ConvFragment<T>,
}

impl<T: Scalar> Parameterized<T> for ConcatFragment<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.conv.visit_params(prefix, f);
    }
}

impl<T: Scalar> GradFragment<T> for ConcatFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.conv.forward(input)?;
        concat_channels(&[input, &y])
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cin = self.conv.conv.params.in_channels;
        let cout = self.conv.conv.params.out_channels;
        let parts = split_channels(grad_out, &[cin, cout])?;
        let mut g = self.conv.backward(&parts[1])?;
        g.add_assign(&parts[0])?;
        Ok(g)
    }
}

/// conv -> batch norm -> ReLU.
pub struct ConvBnReluFragment<T> {
    pub conv: ConvFragment<T>,
    pub bn: BatchNormFragment<T>,
    pre_activation: Option<Tensor<T>>,
    output: Option<Tensor<T>>,
}

impl<T: Scalar> ConvBnReluFragment<T> {
    pub fn new(conv: ConvFragment<T>, bn: BatchNormFragment<T>) -> Self {
        Self {
            conv,
            bn,
            pre_activation: None,
            output: None,
        }
    }
}

impl<T: Scalar> Parameterized<T> for ConvBnReluFragment<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.conv.visit_params(prefix, f);
        self.bn.visit_params(prefix, f);
    }
}

impl<T: Scalar> GradFragment<T> for ConvBnReluFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.conv.forward(input)?;
        let z = self.bn.forward(&y)?;
        let out = relu(&z);
        self.pre_activation = Some(z);
        self.output = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = relu_backward(self.output.as_ref().ok_or_else(missing_forward)?, grad_out)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }

    fn kink_signature(&self) -> Vec<u64> {
        self.pre_activation
            .as_ref()
            .map(positive_mask)
            .unwrap_or_default()
    }
}
