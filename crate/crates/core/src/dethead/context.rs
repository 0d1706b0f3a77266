use rand::Rng;

use crate::config::ContextConfig;
use crate::error::Result;
use crate::nnengine::batchnorm_forward;
use crate::nnengine::fragments::missing_forward;
use crate::nnengine::param::join;
use crate::nnengine::{
    batchnorm_backward, concat_channels, relu, relu_backward, split_channels, BatchNorm,
    BatchNormCache, Conv1d, Mode, ParamSlot, Parameterized, Scalar, Tensor,
};

/// One atrous branch. Convolution and BN scale/shift are shared by every
/// scale; running statistics are kept per scale because feature statistics
/// differ between scales.
#[derive(Debug, Clone)]
pub struct ContextBranch<T> {
    pub conv: Conv1d<T>,
    pub bn: BatchNorm<T>,
    pub running: Vec<(Vec<T>, Vec<T>)>,
}

/// Atrous branches concatenated with the input, then a 1x1 convolution back
/// to the input width.
#[derive(Debug, Clone)]
pub struct ContextBlock<T> {
    pub channels: usize,
    pub branches: Vec<ContextBranch<T>>,
    pub fuse: Conv1d<T>,
}

pub struct ContextCache<T> {
    input: Tensor<T>,
    scale: usize,
    pub(crate) branches: Vec<(Option<BatchNormCache<T>>, Tensor<T>)>,
    cat: Tensor<T>,
}

impl<T: Scalar> ContextBlock<T> {
    pub fn new<R: Rng + ?Sized>(
        channels: usize,
        cfg: &ContextConfig,
        num_scales: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let branches = cfg
            .dilations
            .iter()
            .map(|&d| {
                Ok(ContextBranch {
                    conv: Conv1d::new(
                        3,
                        channels,
                        channels,
                        1,
                        d,
                        Conv1d::<T>::same_padding(3, d),
                        rng,
                    )?,
                    bn: BatchNorm::new(channels),
                    running: vec![
                        (vec![T::zero(); channels], vec![T::one(); channels]);
                        num_scales
                    ],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let width = channels * (branches.len() + 1);
        let fuse = Conv1d::new(1, width, channels, 1, 1, 0, rng)?;
        Ok(Self {
            channels,
            branches,
            fuse,
        })
    }

    pub fn set_bn_stats(&mut self, momentum: f64, epsilon: f64) {
        for b in &mut self.branches {
            b.bn.params.momentum = momentum;
            b.bn.params.epsilon = epsilon;
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<T>,
        scale: usize,
        mode: Mode,
    ) -> Result<(Tensor<T>, ContextCache<T>)> {
        x.expect_shape((x.length(), self.channels), "contextual block input")?;
        let mut branches = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let pre = b.conv.forward(x)?;
            let mut params = b.bn.params.clone();
            if let Some((m, v)) = b.running.get(scale) {
                params.running_mean.clone_from(m);
                params.running_var.clone_from(v);
            }
            let (normed, cache) = batchnorm_forward(&pre, &params, mode)?;
            branches.push((cache, relu(&normed)));
        }
        let mut parts: Vec<&Tensor<T>> = branches.iter().map(|(_, a)| a).collect();
        parts.push(x);
        let cat = concat_channels(&parts)?;
        let out = self.fuse.forward(&cat)?;
        Ok((
            out,
            ContextCache {
                input: x.clone(),
                scale,
                branches,
                cat,
            },
        ))
    }

    pub fn backward(&mut self, cache: &ContextCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g_cat = self.fuse.backward(&cache.cat, grad_out)?;
        let widths = vec![self.channels; self.branches.len() + 1];
        let mut parts = split_channels(&g_cat, &widths)?;
        let mut g_in = parts.pop().expect("input slice");
        for ((b, (bn_cache, act)), g) in self.branches.iter_mut().zip(&cache.branches).zip(parts) {
            let bn_cache = bn_cache.as_ref().ok_or_else(missing_forward)?;
            let g_norm = relu_backward(act, &g)?;
            let (g_pre, gs, gb) = batchnorm_backward(bn_cache, &b.bn.params, &g_norm)?;
            for (a, v) in b.bn.grad_scale.iter_mut().zip(gs) {
                *a += v;
            }
            for (a, v) in b.bn.grad_shift.iter_mut().zip(gb) {
                *a += v;
            }
            if let Some((m, v)) = b.running.get_mut(cache.scale) {
                let mom = T::of(b.bn.params.momentum);
                let one = T::one() - mom;
                for c in 0..m.len() {
                    m[c] = mom * m[c] + one * bn_cache.mean[c];
                    v[c] = mom * v[c] + one * bn_cache.var[c];
                }
            }
            g_in.add_assign(&b.conv.backward(&cache.input, &g_pre)?)?;
        }
        Ok(g_in)
    }
}

impl<T: Scalar> Parameterized<T> for ContextBlock<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        for (i, b) in self.branches.iter_mut().enumerate() {
            let p = join(prefix, &format!("branch{i}"));
            b.conv.visit_params(&join(&p, "conv"), f);
            let ch = b.bn.params.scale.len();
            f(ParamSlot {
                name: join(&p, "bn.scale"),
                shape: vec![ch],
                value: &mut b.bn.params.scale,
                grad: Some(&mut b.bn.grad_scale),
            });
            f(ParamSlot {
                name: join(&p, "bn.shift"),
                shape: vec![ch],
                value: &mut b.bn.params.shift,
                grad: Some(&mut b.bn.grad_shift),
            });
            for (s, (m, v)) in b.running.iter_mut().enumerate() {
                f(ParamSlot {
                    name: join(&p, &format!("bn.running_mean.scale{s}")),
                    shape: vec![ch],
                    value: m,
                    grad: None,
                });
                f(ParamSlot {
                    name: join(&p, &format!("bn.running_var.scale{s}")),
                    shape: vec![ch],
                    value: v,
                    grad: None,
                });
            }
        }
        self.fuse.visit_params(&join(prefix, "fuse"), f);
    }
}

/// Shared classifier (one logit) and regressor (`d_x`, `d_w`) per node.
#[derive(Debug, Clone)]
pub struct SiblingHeads<T> {
    pub cls: Conv1d<T>,
    pub reg: Conv1d<T>,
}

impl<T: Scalar> SiblingHeads<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Result<Self> {
        let cls = Conv1d::new(1, channels, 1, 1, 1, 0, rng)?;
        let mut reg = Conv1d::new(1, channels, 2, 1, 1, 0, rng)?;
        // Start the regressor near the anchors.
        reg.params.weights.iter_mut().for_each(|w| *w *= T::of(0.1));
        Ok(Self { cls, reg })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((self.cls.forward(x)?, self.reg.forward(x)?))
    }

    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        g_scores: &Tensor<T>,
        g_offsets: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let mut g = self.cls.backward(x, g_scores)?;
        g.add_assign(&self.reg.backward(x, g_offsets)?)?;
        Ok(g)
    }
}

impl<T: Scalar> Parameterized<T> for SiblingHeads<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.cls.visit_params(&join(prefix, "cls"), f);
        self.reg.visit_params(&join(prefix, "reg"), f);
    }
}
