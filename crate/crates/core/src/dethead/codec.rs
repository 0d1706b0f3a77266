use super::Anchor;
use crate::error::{Error, Result};
use crate::geomeval::Interval;

/// Regression targets of `(center, width)` relative to an anchor.
pub fn encode_span(anchor: &Anchor, center: f64, width: f64) -> Result<(f64, f64)> {
    if width.is_nan() || width <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target width {width} must be positive"
        )));
    }
    Ok((
        (center - anchor.center) / anchor.width,
        (width / anchor.width).ln(),
    ))
}

pub fn encode_offsets(anchor: &Anchor, gt: &Interval) -> Result<(f64, f64)> {
    encode_span(anchor, gt.center(), gt.len() as f64)
}

/// Real-valued `(center, width)` for predicted offsets, no clamping.
pub fn decode_span(anchor: &Anchor, dx: f64, dw: f64) -> (f64, f64) {
    (anchor.width * dx + anchor.center, anchor.width * dw.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    /// `None` when the prediction lies entirely outside the segment.
    pub interval: Option<Interval>,
    pub dw_clamped: bool,
}

/// Decodes offsets into an integer interval clipped to `[0, segment_length)`.
/// Width offsets above `max_dw` are clamped first.
pub fn decode_offsets(
    anchor: &Anchor,
    dx: f64,
    dw: f64,
    segment_length: usize,
    max_dw: f64,
) -> Decoded {
    let dw_clamped = dw > max_dw;
    let (c, w) = decode_span(anchor, dx, dw.min(max_dw));
    let begin = (c - w / 2.0).round().max(0.0);
    let end = (c + w / 2.0).round().min(segment_length as f64);
    let interval = if begin.is_finite() && end.is_finite() && begin < end {
        Interval::new(begin as i64, end as i64).ok()
    } else {
        None
    };
    Decoded {
        interval,
        dw_clamped,
    }
}
