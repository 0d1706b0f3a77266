use super::{decode_offsets, generate_anchors};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::geomeval::{nms, Detection};
use crate::nnengine::{Scalar, Tensor};

/// Head outputs of one scale: logits `(n x 1)` and offsets `(n x 2)`.
#[derive(Debug, Clone)]
pub struct ScaleOutput<T> {
    pub scale_index: usize,
    pub logits: Tensor<T>,
    pub offsets: Tensor<T>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeStats {
    pub candidates: usize,
    pub dw_clamped: usize,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Every node scoring above the threshold, decoded to segment coordinates.
pub fn decode_candidates<T: Scalar>(
    outputs: &[ScaleOutput<T>],
    config: &ModelConfig,
    segment_length: usize,
) -> Result<(Vec<Detection>, DecodeStats)> {
    let cfg = &config.detect;
    let mut stats = DecodeStats::default();
    let mut out = Vec::new();
    for o in outputs {
        let anchors = generate_anchors(config, segment_length, o.scale_index)?;
        if o.logits.shape() != (anchors.len(), 1) || o.offsets.shape() != (anchors.len(), 2) {
            return Err(Error::shape(
                "head outputs per anchor",
                anchors.len(),
                o.logits.length(),
            ));
        }
        for (j, a) in anchors.iter().enumerate() {
            let logit = o.logits.get(j, 0).f64();
            if logit.is_nan() {
                return Err(Error::Numerical(format!(
                    "NaN logit at scale {} node {j}",
                    o.scale_index
                )));
            }
            let score = stable_sigmoid(logit.clamp(-cfg.logit_clamp, cfg.logit_clamp));
            if score <= cfg.score_threshold {
                continue;
            }
            stats.candidates += 1;
            let d = decode_offsets(
                a,
                o.offsets.get(j, 0).f64(),
                o.offsets.get(j, 1).f64(),
                segment_length,
                cfg.max_dw,
            );
            stats.dw_clamped += usize::from(d.dw_clamped);
            if let Some(interval) = d.interval {
                out.push(Detection::new(interval, score, Some(o.scale_index)));
            }
        }
    }
    Ok((out, stats))
}

/// Candidates pooled over scales, then greedy NMS.
pub fn detect_from_outputs<T: Scalar>(
    outputs: &[ScaleOutput<T>],
    config: &ModelConfig,
    segment_length: usize,
) -> Result<Vec<Detection>> {
    let (cands, stats) = decode_candidates(outputs, config, segment_length)?;
    if stats.dw_clamped > 0 {
        log::debug!(
            "{} width offsets clamped to {}",
            stats.dw_clamped,
            config.detect.max_dw
        );
    }
    Ok(nms(&cands, config.detect.nms_iou))
}
