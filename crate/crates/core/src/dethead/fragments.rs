//! Gradient-check fragments for the head stack and the joint loss.

use rand::Rng;

use super::{
    joint_loss_with_grads, ContextBlock, ContextCache, ProposalOutput, SampledProposal,
    SiblingHeads,
};
use crate::config::{ContextConfig, LossParams};
use crate::error::{Error, Result};
use crate::nnengine::fragments::{missing_forward, positive_mask};
use crate::nnengine::param::join;
use crate::nnengine::{
    concat_channels, split_channels, GradFragment, Mode, ParamSlot, Parameterized, Scalar, Tensor,
};

fn rows<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Tensor<T> {
    let ch = x.channels();
    Tensor::new(len, ch, x.data()[start * ch..(start + len) * ch].to_vec()).expect("row slice")
}

fn stack_rows<T: Scalar>(parts: &[Tensor<T>]) -> Tensor<T> {
    let ch = parts[0].channels();
    let len = parts.iter().map(|p| p.length()).sum();
    let data = parts
        .iter()
        .flat_map(|p| p.data().iter().copied())
        .collect();
    Tensor::new(len, ch, data).expect("row stack")
}

/// Contextual block (optional) and sibling heads applied to several scale
/// maps stacked along time. Output rows are `[logit, d_x, d_w]`.
pub struct HeadStackFragment<T> {
    pub context: Option<ContextBlock<T>>,
    pub heads: SiblingHeads<T>,
    pub lengths: Vec<usize>,
    caches: Vec<(Option<ContextCache<T>>, Tensor<T>)>,
}

impl<T: Scalar> HeadStackFragment<T> {
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        channels: usize,
        lengths: Vec<usize>,
        context: bool,
    ) -> Result<Self> {
        Self::with_dilations(rng, channels, lengths, context.then(|| vec![1, 2, 3]))
    }

    /// `None` leaves out the contextual block.
    pub fn with_dilations<R: Rng + ?Sized>(
        rng: &mut R,
        channels: usize,
        lengths: Vec<usize>,
        dilations: Option<Vec<usize>>,
    ) -> Result<Self> {
        let cfg = ContextConfig {
            enabled: dilations.is_some(),
            dilations: dilations.unwrap_or_default(),
        };
        let context = if cfg.enabled {
            let mut c = ContextBlock::new(channels, &cfg, lengths.len(), rng)?;
            for b in &mut c.branches {
                for v in b.bn.params.scale.iter_mut() {
                    *v = T::of(rng.gen_range(0.5..1.5));
                }
                for v in b.bn.params.shift.iter_mut() {
                    *v = T::of(rng.gen_range(-0.5..0.5));
                }
            }
            Some(c)
        } else {
            None
        };
        let mut heads = SiblingHeads::new(channels, rng)?;
        heads
            .reg
            .params
            .weights
            .iter_mut()
            .for_each(|w| *w *= T::of(10.0));
        Ok(Self {
            context,
            heads,
            lengths,
            caches: Vec::new(),
        })
    }
}

impl<T: Scalar> Parameterized<T> for HeadStackFragment<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        if let Some(c) = &mut self.context {
            c.visit_params(&join(prefix, "context"), f);
        }
        self.heads.visit_params(&join(prefix, "heads"), f);
    }
}

impl<T: Scalar> GradFragment<T> for HeadStackFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let total: usize = self.lengths.iter().sum();
        input.expect_shape((total, input.channels()), "stacked scale maps")?;
        self.caches.clear();
        let mut outs = Vec::new();
        let mut start = 0;
        for (s, &len) in self.lengths.iter().enumerate() {
            let x = rows(input, start, len);
            start += len;
            let (feat, cache) = match &self.context {
                Some(c) => {
                    let (y, cache) = c.forward(&x, s, Mode::Train)?;
                    (y, Some(cache))
                }
                None => (x, None),
            };
            let (sc, off) = self.heads.forward(&feat)?;
            outs.push(concat_channels(&[&sc, &off])?);
            self.caches.push((cache, feat));
        }
        Ok(stack_rows(&outs))
    }

    fn kink_signature(&self) -> Vec<u64> {
        let mut sig = Vec::new();
        for (cache, _) in &self.caches {
            if let Some(c) = cache {
                for (_, act) in &c.branches {
                    sig.extend(positive_mask(act));
                }
            }
        }
        sig
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if self.caches.is_empty() {
            return Err(missing_forward());
        }
        let mut grads = Vec::new();
        let mut start = 0;
        for (i, &len) in self.lengths.iter().enumerate() {
            let g = rows(grad_out, start, len);
            start += len;
            let parts = split_channels(&g, &[1, 2])?;
            let (cache, feat) = &self.caches[i];
            let mut gx = self.heads.backward(feat, &parts[0], &parts[1])?;
            if let (Some(c), Some(cache)) = (&mut self.context, cache) {
                gx = c.backward(cache, &gx)?;
            }
            grads.push(gx);
        }
        Ok(stack_rows(&grads))
    }
}

/// Joint loss over a fixed proposal sample, as a `1 x 1` output.
pub struct JointLossFragment<T> {
    pub stack: HeadStackFragment<T>,
    pub samples: Vec<SampledProposal>,
    pub params: LossParams,
    outputs: Option<Tensor<T>>,
}

impl<T: Scalar> JointLossFragment<T> {
    pub fn new(
        stack: HeadStackFragment<T>,
        samples: Vec<SampledProposal>,
        params: LossParams,
    ) -> Self {
        Self {
            stack,
            samples,
            params,
            outputs: None,
        }
    }

    fn row_of(&self, s: &SampledProposal) -> Result<usize> {
        if s.scale >= self.stack.lengths.len() || s.node >= self.stack.lengths[s.scale] {
            return Err(Error::InvalidArgument(format!(
                "sample {s:?} outside the maps"
            )));
        }
        Ok(self.stack.lengths[..s.scale].iter().sum::<usize>() + s.node)
    }

    fn proposal_outputs(&self, out: &Tensor<T>) -> Result<Vec<ProposalOutput>> {
        self.samples
            .iter()
            .map(|s| {
                let r = self.row_of(s)?;
                Ok(ProposalOutput {
                    logit: out.get(r, 0).f64(),
                    dx: out.get(r, 1).f64(),
                    dw: out.get(r, 2).f64(),
                })
            })
            .collect()
    }
}

impl<T: Scalar> Parameterized<T> for JointLossFragment<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.stack.visit_params(prefix, f);
    }
}

impl<T: Scalar> GradFragment<T> for JointLossFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.stack.forward(input)?;
        let po = self.proposal_outputs(&out)?;
        let (loss, _) = joint_loss_with_grads(&po, &self.samples, &self.params, f64::INFINITY)?;
        self.outputs = Some(out);
        Tensor::new(1, 1, vec![T::of(loss.total)])
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.outputs.as_ref().ok_or_else(missing_forward)?;
        let po = self.proposal_outputs(out)?;
        let (_, g) = joint_loss_with_grads(&po, &self.samples, &self.params, f64::INFINITY)?;
        let scale = grad_out.get(0, 0).f64();
        let mut gt = Tensor::zeros(out.length(), 3);
        for (s, gs) in self.samples.iter().zip(g) {
            let r = self.row_of(s)?;
            let row = gt.row_mut(r);
            row[0] += T::of(gs.logit * scale);
            row[1] += T::of(gs.dx * scale);
            row[2] += T::of(gs.dw * scale);
        }
        self.stack.backward(&gt)
    }

    fn kink_signature(&self) -> Vec<u64> {
        let mut sig = self.stack.kink_signature();
        if let Some(out) = &self.outputs {
            if let Ok(po) = self.proposal_outputs(out) {
                for (o, s) in po.iter().zip(&self.samples) {
                    if let Some((tx, tw)) = s.targets {
                        sig.push(
                            u64::from((tx - o.dx).abs() < 1.0)
                                | u64::from((tw - o.dw).abs() < 1.0) << 1,
                        );
                    }
                }
            }
        }
        sig
    }
}
