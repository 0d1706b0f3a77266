//! Gradient-check fragment for a small backbone.

use super::{Backbone, BackboneCache};
use crate::config::BackboneConfig;
use crate::error::Result;
use crate::nnengine::fragments::missing_forward;
use crate::nnengine::{GradFragment, Mode, ParamSlot, Parameterized, Scalar, Tensor};

/// Whole backbone with every detection map flattened and stacked into one
/// column, so a single projection covers all scales.
pub struct BackboneFragment<T> {
    pub backbone: Backbone<T>,
    cache: Option<(BackboneCache<T>, Vec<Shape>)>,
}

type Shape = (usize, usize);

impl<T: Scalar> BackboneFragment<T> {
    pub fn new(config: &BackboneConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            backbone: Backbone::new(config, seed)?,
            cache: None,
        })
    }
}

impl<T: Scalar> Parameterized<T> for BackboneFragment<T> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>)) {
        self.backbone.visit_params(prefix, f);
    }
}

impl<T: Scalar> GradFragment<T> for BackboneFragment<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let last = self.backbone.config.num_scales - 1;
        let (pyr, cache) = self.backbone.forward(input, Mode::Train, last)?;
        let shapes = pyr.maps.iter().map(|m| m.shape()).collect();
        let data: Vec<T> = pyr
            .maps
            .iter()
            .flat_map(|m| m.data().iter().copied())
            .collect();
        self.cache = Some((cache, shapes));
        Tensor::new(data.len(), 1, data)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (cache, shapes) = self.cache.as_ref().ok_or_else(missing_forward)?;
        let mut grads = Vec::with_capacity(shapes.len());
        let mut start = 0;
        for &(len, ch) in shapes {
            let n = len * ch;
            grads.push(Some(Tensor::new(
                len,
                ch,
                grad_out.data()[start..start + n].to_vec(),
            )?));
            start += n;
        }
        self.backbone.backward(cache, &grads)
    }

    fn kink_signature(&self) -> Vec<u64> {
        self.cache
            .as_ref()
            .map(|(c, _)| c.kink_signature())
            .unwrap_or_default()
    }
}
