use rand::Rng;

use crate::error::{Error, Result};
use crate::nnengine::fragments::{missing_forward, positive_mask};
use crate::nnengine::param::join;
use crate::nnengine::{
    avgpool1d, avgpool1d_backward, concat_channels, maxpool1d, maxpool1d_backward, relu,
    relu_backward, split_channels, BatchNorm, BatchNormCache, Conv1d, MaxPoolCache, Mode,
    ParamSlot, Parameterized, Scalar, Tensor,
};

/// `BN -> ReLU -> conv` with cached intermediates.
#[derive(Debug, Clone)]
pub struct BnReluConv<T> {
    pub bn: BatchNorm<T>,
    pub conv: Conv1d<T>,
}

pub struct BnReluConvCache<T> {
    bn: Option<BatchNormCache<T>>,
    act: Tensor<T>,
}

impl<T: Scalar> BnReluConvCache<T> {
    pub(crate) fn kinks(&self, out: &mut Vec<u64>) {
        out.extend(positive_mask(&self.act));
    }
}

impl<T: Scalar> BnReluConv<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let pad = Conv1d::<T>::same_padding(kernel, dilation);
        Ok(Self {
            bn: BatchNorm::new(in_channels),
            conv: Conv1d::new(kernel, in_channels, out_channels, 1, dilation, pad, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BnReluConvCache<T>)> {
        let (normed, bn) = self.bn.forward(x, mode)?;
        let act = relu(&normed);
        let out = self.conv.forward(&act)?;
        Ok((out, BnReluConvCache { bn, act }))
    }

    pub fn backward(
        &mut self,
        cache: &BnReluConvCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let bn_cache = cache.bn.as_ref().ok_or_else(missing_forward)?;
        let g_act = self.conv.backward(&cache.act, grad_out)?;
        let g_pre = relu_backward(&cache.act, &g_act)?;
        self.bn.backward(bn_cache, &g_pre)
    }

    pub fn set_bn_stats(&mut self, momentum: f64, epsilon: f64) {
        self.bn.params.momentum = momentum;
        self.bn.params.epsilon = epsilon;
    }
}

impl<T: Scalar> Parameterized<T> for BnReluConv<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.bn.visit_params(&join(prefix, "bn"), f);
        self.conv.visit_params(&join(prefix, "conv"), f);
    }
}

/// Dense block: every layer sees the concatenation of the block input and
/// all earlier layer outputs, and contributes `growth` new channels.
#[derive(Debug, Clone)]
pub struct DenseBlock<T> {
    pub in_channels: usize,
    pub growth: usize,
    pub layers: Vec<BnReluConv<T>>,
}

pub struct DenseBlockCache<T> {
    layers: Vec<BnReluConvCache<T>>,
}

impl<T: Scalar> DenseBlockCache<T> {
    pub(crate) fn kinks(&self, out: &mut Vec<u64>) {
        self.layers.iter().for_each(|l| l.kinks(out));
    }
}

impl<T: Scalar> DenseBlock<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        growth: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|l| BnReluConv::new(in_channels + l * growth, growth, 3, 1, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            in_channels,
            growth,
            layers,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + self.growth * self.layers.len()
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, DenseBlockCache<T>)> {
        x.expect_shape((x.length(), self.in_channels), "dense block input")?;
        let mut cat = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (new, cache) = layer.forward(&cat, mode)?;
            cat = concat_channels(&[&cat, &new])?;
            caches.push(cache);
        }
        Ok((cat, DenseBlockCache { layers: caches }))
    }

    pub fn backward(
        &mut self,
        cache: &DenseBlockCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let mut grad = grad_out.clone();
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            let width = self.in_channels + l * self.growth;
            let mut parts = split_channels(&grad, &[width, self.growth])?;
            let g_new = parts.pop().expect("two parts");
            let mut g_cat = parts.pop().expect("two parts");
            let g_in = layer.backward(&cache.layers[l], &g_new)?;
            g_cat.add_assign(&g_in)?;
            grad = g_cat;
        }
        Ok(grad)
    }
}

impl<T: Scalar> Parameterized<T> for DenseBlock<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&join(prefix, &format!("layer{l}")), f);
        }
    }
}

/// Halves the length with a 2/2 average pool, optionally after a
/// `BN -> ReLU -> 1x1 conv` compression.
#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub compress: Option<BnReluConv<T>>,
}

pub struct TransitionCache<T> {
    compress: Option<BnReluConvCache<T>>,
    pooled_from: usize,
}

impl<T: Scalar> TransitionCache<T> {
    pub(crate) fn kinks(&self, out: &mut Vec<u64>) {
        if let Some(c) = &self.compress {
            c.kinks(out);
        }
    }
}

impl<T: Scalar> Transition<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        compress_to: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let compress = compress_to
            .map(|c| BnReluConv::new(in_channels, c, 1, 1, rng))
            .transpose()?;
        Ok(Self { compress })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, TransitionCache<T>)> {
        let (pre, compress) = match &self.compress {
            Some(c) => {
                let (y, cache) = c.forward(x, mode)?;
                (y, Some(cache))
            }
            None => (x.clone(), None),
        };
        let out = avgpool1d(&pre, 2, 2)?;
        Ok((
            out,
            TransitionCache {
                compress,
                pooled_from: pre.length(),
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &TransitionCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let g = avgpool1d_backward(cache.pooled_from, 2, 2, grad_out)?;
        match (&mut self.compress, &cache.compress) {
            (Some(c), Some(cc)) => c.backward(cc, &g),
            (None, None) => Ok(g),
            _ => Err(Error::InvalidArgument(
                "transition cache does not match layer".into(),
            )),
        }
    }
}

impl<T: Scalar> Parameterized<T> for Transition<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        if let Some(c) = &mut self.compress {
            c.visit_params(prefix, f);
        }
    }
}

/// Strided convolution, BN, ReLU and a 3/2 max pool: total stride 4.
#[derive(Debug, Clone)]
pub struct Stem<T> {
    pub conv: Conv1d<T>,
    pub bn: BatchNorm<T>,
}

pub struct StemCache<T> {
    input: Tensor<T>,
    bn: Option<BatchNormCache<T>>,
    act: Tensor<T>,
    pool: MaxPoolCache,
}

impl<T: Scalar> StemCache<T> {
    pub(crate) fn kinks(&self, out: &mut Vec<u64>) {
        out.extend(positive_mask(&self.act));
        out.extend(self.pool.argmax.iter().map(|&i| i as u64));
    }
}

impl<T: Scalar> Stem<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, kernel: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            conv: Conv1d::new(kernel, 1, channels, 2, 1, kernel / 2, rng)?,
            bn: BatchNorm::new(channels),
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, StemCache<T>)> {
        let pre = self.conv.forward(x)?;
        let (normed, bn) = self.bn.forward(&pre, mode)?;
        let act = relu(&normed);
        let (out, pool) = maxpool1d(&act, 3, 2, 1)?;
        Ok((
            out,
            StemCache {
                input: x.clone(),
                bn,
                act,
                pool,
            },
        ))
    }

    pub fn backward(&mut self, cache: &StemCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let bn_cache = cache.bn.as_ref().ok_or_else(missing_forward)?;
        let g_act = maxpool1d_backward(&cache.pool, grad_out)?;
        let g_norm = relu_backward(&cache.act, &g_act)?;
        let g_pre = self.bn.backward(bn_cache, &g_norm)?;
        self.conv.backward(&cache.input, &g_pre)
    }
}

impl<T: Scalar> Parameterized<T> for Stem<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
    }
}
