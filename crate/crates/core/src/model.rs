//! The assembled detector: backbone, shared contextual block and sibling
//! heads over the active scales.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, BackboneCache};
use crate::config::ModelConfig;
use crate::dataio::normalize_segment;
use crate::dethead::{detect_from_outputs, ContextBlock, ContextCache, ScaleOutput, SiblingHeads};
use crate::error::{Error, Result};
use crate::geomeval::Detection;
use crate::nnengine::param::join;
use crate::nnengine::{Mode, ParamSlot, Parameterized, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub config: ModelConfig,
    pub backbone: Backbone<T>,
    pub context: Option<ContextBlock<T>>,
    pub heads: SiblingHeads<T>,
}

struct ScaleCache<T> {
    context: Option<ContextCache<T>>,
    features: Tensor<T>,
}

pub struct NetworkCache<T> {
    backbone: BackboneCache<T>,
    scales: Vec<(usize, ScaleCache<T>)>,
}

/// Gradients of the loss with respect to one scale's head outputs.
#[derive(Debug, Clone)]
pub struct ScaleGrad<T> {
    pub scale_index: usize,
    pub logits: Tensor<T>,
    pub offsets: Tensor<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut backbone = Backbone::new(&config.backbone, config.init_seed)?;
        backbone.set_bn_stats(config.bn_momentum, config.bn_epsilon);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed ^ 0x9e37_79b9_7f4a_7c15);
        let f = config.backbone.proposal_feature_dim;
        let context = if config.context.enabled {
            let mut c = ContextBlock::new(f, &config.context, config.num_scales(), &mut rng)?;
            c.set_bn_stats(config.bn_momentum, config.bn_epsilon);
            Some(c)
        } else {
            None
        };
        let heads = SiblingHeads::new(f, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            backbone,
            context,
            heads,
        })
    }

    /// Normalized single-channel input tensor for a raw segment.
    pub fn prepare_input(&self, samples: &[f32]) -> Result<Tensor<T>> {
        if samples.len() != self.config.segment_length {
            return Err(Error::shape(
                "segment length",
                self.config.segment_length,
                samples.len(),
            ));
        }
        let norm = normalize_segment(samples);
        Ok(Tensor::from_fn(norm.len(), 1, |t, _| {
            T::of(f64::from(norm[t]))
        }))
    }

    /// Head outputs for every active scale, finest first.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        mode: Mode,
    ) -> Result<(Vec<ScaleOutput<T>>, NetworkCache<T>)> {
        let scales = self.config.active_scales();
        let last = *scales.last().expect("validated non-empty");
        let (pyramid, bcache) = self.backbone.forward(input, mode, last)?;
        let mut outputs = Vec::with_capacity(scales.len());
        let mut caches = Vec::with_capacity(scales.len());
        for &s in &scales {
            let map = &pyramid.maps[s];
            let (features, context) = match &self.context {
                Some(c) => {
                    let (y, cache) = c.forward(map, s, mode)?;
                    (y, Some(cache))
                }
                None => (map.clone(), None),
            };
            let (logits, offsets) = self.heads.forward(&features)?;
            outputs.push(ScaleOutput {
                scale_index: s,
                logits,
                offsets,
            });
            caches.push((s, ScaleCache { context, features }));
        }
        Ok((
            outputs,
            NetworkCache {
                backbone: bcache,
                scales: caches,
            },
        ))
    }

    /// Accumulates parameter gradients from per-scale output gradients.
    pub fn backward(&mut self, cache: &NetworkCache<T>, grads: &[ScaleGrad<T>]) -> Result<()> {
        let n = self.config.num_scales();
        let mut scale_grads: Vec<Option<Tensor<T>>> = vec![None; n];
        for g in grads {
            let (_, sc) = cache
                .scales
                .iter()
                .find(|(s, _)| *s == g.scale_index)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("no forward cache for scale {}", g.scale_index))
                })?;
            let mut gx = self.heads.backward(&sc.features, &g.logits, &g.offsets)?;
            if let (Some(c), Some(cc)) = (&mut self.context, &sc.context) {
                gx = c.backward(cc, &gx)?;
            }
            scale_grads[g.scale_index] = Some(gx);
        }
        self.backbone.backward(&cache.backbone, &scale_grads)?;
        Ok(())
    }

    /// Detections in segment coordinates for one raw segment.
    pub fn detect_segment(&self, samples: &[f32]) -> Result<Vec<Detection>> {
        let x = self.prepare_input(samples)?;
        let (outputs, _) = self.forward(&x, Mode::Infer)?;
        detect_from_outputs(&outputs, &self.config, self.config.segment_length)
    }
}

impl<T: Scalar> Parameterized<T> for Network<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.backbone.visit_params(&join(prefix, "backbone"), f);
        if let Some(c) = &mut self.context {
            c.visit_params(&join(prefix, "context"), f);
        }
        self.heads.visit_params(&join(prefix, "heads"), f);
    }
}
