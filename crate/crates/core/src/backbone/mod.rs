//! Densely connected 1D backbone producing one feature map per detection
//! scale, plus the binary checkpoint format.

mod checkpoint;
pub mod fragments;
mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    apply_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint,
    StoredArray, CHECKPOINT_MAGIC,
};
pub use layers::{
    BnReluConv, BnReluConvCache, DenseBlock, DenseBlockCache, Stem, StemCache, Transition,
    TransitionCache,
};

use crate::config::BackboneConfig;
use crate::error::{Error, Result};
use crate::nnengine::param::join;
use crate::nnengine::{Mode, ParamSlot, Parameterized, Scalar, Tensor};

/// Feature maps of the computed detection scales, finest first. Map `i` has
/// `segment_length / stride(i)` rows.
#[derive(Debug, Clone)]
pub struct FeaturePyramid<T> {
    pub maps: Vec<Tensor<T>>,
    pub strides: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Stage<T> {
    pub transition: Option<Transition<T>>,
    pub block: DenseBlock<T>,
}

pub struct BackboneCache<T> {
    stem: StemCache<T>,
    stages: Vec<(Option<TransitionCache<T>>, DenseBlockCache<T>)>,
}

impl<T: Scalar> BackboneCache<T> {
    /// ReLU masks and pooling argmaxes of the cached forward.
    pub fn kink_signature(&self) -> Vec<u64> {
        let mut out = Vec::new();
        self.stem.kinks(&mut out);
        for (t, b) in &self.stages {
            if let Some(t) = t {
                t.kinks(&mut out);
            }
            b.kinks(&mut out);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Backbone<T> {
    pub config: BackboneConfig,
    pub stem: Stem<T>,
    pub stages: Vec<Stage<T>>,
}

impl<T: Scalar> Backbone<T> {
    pub fn new(config: &BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Stem::new(config.stem_channels, config.stem_kernel, &mut rng)?;
        let chans = config.stage_channels();
        let mut stages = Vec::with_capacity(chans.len());
        let mut prev_out = config.stem_channels;
        for (i, &(cin, _)) in chans.iter().enumerate() {
            let transition = if i == 0 {
                None
            } else {
                Some(Transition::new(
                    prev_out,
                    config.transition_compress[i - 1],
                    &mut rng,
                )?)
            };
            let block = DenseBlock::new(
                cin,
                config.growth_rates[i],
                config.layers_per_block,
                &mut rng,
            )?;
            prev_out = block.out_channels();
            stages.push(Stage { transition, block });
        }
        Ok(Self {
            config: config.clone(),
            stem,
            stages,
        })
    }

    pub fn set_bn_stats(&mut self, momentum: f64, epsilon: f64) {
        self.visit_bn(&mut |bn| {
            bn.params.momentum = momentum;
            bn.params.epsilon = epsilon;
        });
    }

    fn visit_bn(&mut self, f: &mut dyn FnMut(&mut crate::nnengine::BatchNorm<T>)) {
        f(&mut self.stem.bn);
        for s in &mut self.stages {
            if let Some(BnReluConv { bn, .. }) =
                s.transition.as_mut().and_then(|t| t.compress.as_mut())
            {
                f(bn);
            }
            for l in &mut s.block.layers {
                f(&mut l.bn);
            }
        }
    }

    pub fn required_multiple(&self) -> usize {
        self.config.stage_stride(self.config.num_stages() - 1)
    }

    /// Runs the stem and stages up to and including detection scale
    /// `last_scale`, returning the detection-scale maps computed.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        last_scale: usize,
    ) -> Result<(FeaturePyramid<T>, BackboneCache<T>)> {
        let m = self.required_multiple();
        if input.channels() != 1 {
            return Err(Error::shape("backbone input channels", 1, input.channels()));
        }
        if !input.length().is_multiple_of(m) || input.length() < 2 * m {
            return Err(Error::InputLength {
                length: input.length(),
                multiple: m,
            });
        }
        if last_scale >= self.config.num_scales {
            return Err(Error::InvalidArgument(format!(
                "scale {last_scale} out of range for {} scales",
                self.config.num_scales
            )));
        }
        let first = self.config.first_detection_stage();
        let (mut x, stem) = self.stem.forward(input, mode)?;
        let mut caches = Vec::new();
        let mut pyramid = FeaturePyramid {
            maps: Vec::new(),
            strides: Vec::new(),
        };
        for (i, stage) in self.stages.iter().enumerate().take(first + last_scale + 1) {
            let tcache = match &stage.transition {
                Some(t) => {
                    let (y, c) = t.forward(&x, mode)?;
                    x = y;
                    Some(c)
                }
                None => None,
            };
            let (y, bcache) = stage.block.forward(&x, mode)?;
            x = y;
            caches.push((tcache, bcache));
            if i >= first {
                pyramid.maps.push(x.clone());
                pyramid.strides.push(self.config.stage_stride(i));
            }
        }
        Ok((
            pyramid,
            BackboneCache {
                stem,
                stages: caches,
            },
        ))
    }

    /// Back-propagates per-scale gradients (`None` = no gradient) and returns
    /// the gradient with respect to the input.
    pub fn backward(
        &mut self,
        cache: &BackboneCache<T>,
        scale_grads: &[Option<Tensor<T>>],
    ) -> Result<Tensor<T>> {
        let first = self.config.first_detection_stage();
        let computed = cache.stages.len();
        let mut carry: Option<Tensor<T>> = None;
        for i in (0..computed).rev() {
            let mut g = carry.take();
            if i >= first {
                if let Some(Some(sg)) = scale_grads.get(i - first) {
                    match &mut g {
                        Some(acc) => acc.add_assign(sg)?,
                        None => g = Some(sg.clone()),
                    }
                }
            }
            let Some(g) = g else { continue };
            let stage = &mut self.stages[i];
            let (tcache, bcache) = &cache.stages[i];
            let mut gx = stage.block.backward(bcache, &g)?;
            if let (Some(t), Some(tc)) = (&mut stage.transition, tcache) {
                gx = t.backward(tc, &gx)?;
            }
            carry = Some(gx);
        }
        match carry {
            Some(g) => self.stem.backward(&cache.stem, &g),
            None => Ok(Tensor::zeros(0, 1)),
        }
    }
}

impl<T: Scalar> Parameterized<T> for Backbone<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.stem.visit_params(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter_mut().enumerate() {
            let p = join(prefix, &format!("stage{i}"));
            if let Some(t) = &mut s.transition {
                t.visit_params(&join(&p, "transition"), f);
            }
            s.block.visit_params(&join(&p, "block"), f);
        }
    }
}

/// Builds a freshly initialised backbone and runs it in inference mode over
/// every scale.
pub fn build_and_forward(
    config: &BackboneConfig,
    segment: &[f32],
    seed: u64,
) -> Result<FeaturePyramid<f32>> {
    let net = Backbone::<f32>::new(config, seed)?;
    let x = Tensor::from_signal(segment);
    let (pyr, _) = net.forward(&x, Mode::Infer, config.num_scales - 1)?;
    Ok(pyr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::nnengine::count_params;

    #[test]
    fn pyramid_shapes_desk() {
        let c = ModelConfig::desk();
        let seg: Vec<f32> = (0..c.segment_length)
            .map(|i| (i as f32 * 0.01).sin())
            .collect();
        let p = build_and_forward(&c.backbone, &seg, 1).unwrap();
        assert_eq!(p.maps.len(), 4);
        for (i, m) in p.maps.iter().enumerate() {
            assert_eq!(m.shape(), (c.segment_length / (64 << i), 64));
            assert!(m.all_finite());
        }
    }

    #[test]
    fn bad_length_names_multiple() {
        let c = ModelConfig::desk();
        let e = build_and_forward(&c.backbone, &vec![0.0; 5000], 0).unwrap_err();
        assert!(matches!(e, Error::InputLength { multiple: 512, .. }));
    }

    #[test]
    fn backward_shapes() {
        let c = ModelConfig::desk();
        let mut net = Backbone::<f32>::new(&c.backbone, 3).unwrap();
        let x = Tensor::from_fn(1024, 1, |t, _| ((t * 7 % 13) as f32) / 13.0);
        let (p, cache) = net.forward(&x, Mode::Train, 1).unwrap();
        assert_eq!(p.maps.len(), 2);
        let grads: Vec<_> = p.maps.iter().map(|m| Some(m.map(|_| 1.0))).collect();
        let gx = net.backward(&cache, &grads).unwrap();
        assert_eq!(gx.shape(), (1024, 1));
        assert!(count_params(&mut net) > 0);
    }
}
