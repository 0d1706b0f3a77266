use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::geomeval::{iou_span, Interval};

/// A reference interval attached to one feature node. Anchors may extend
/// past the segment; IoU always uses the untruncated extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub center: f64,
    pub width: f64,
    pub scale_index: usize,
    pub node_index: usize,
}

impl Anchor {
    pub fn span(&self) -> (f64, f64) {
        (
            self.center - self.width / 2.0,
            self.center + self.width / 2.0,
        )
    }

    pub fn iou(&self, gt: &Interval) -> f64 {
        iou_span(self.span(), gt.as_span())
    }
}

/// One anchor per node of a map with the given stride; node `j` is centred
/// on sample `j * stride`.
pub fn anchor_grid(
    size: f64,
    stride: usize,
    segment_length: usize,
    scale_index: usize,
) -> Result<Vec<Anchor>> {
    if stride == 0 || !segment_length.is_multiple_of(stride) {
        return Err(Error::InputLength {
            length: segment_length,
            multiple: stride.max(1),
        });
    }
    Ok((0..segment_length / stride)
        .map(|j| Anchor {
            center: (j * stride) as f64,
            width: size,
            scale_index,
            node_index: j,
        })
        .collect())
}

pub fn generate_anchors(
    config: &ModelConfig,
    segment_length: usize,
    scale_index: usize,
) -> Result<Vec<Anchor>> {
    let size = *config
        .anchor_sizes
        .get(scale_index)
        .ok_or_else(|| Error::InvalidArgument(format!("scale {scale_index} out of range")))?;
    anchor_grid(
        size,
        config.scale_stride(scale_index),
        segment_length,
        scale_index,
    )
}
