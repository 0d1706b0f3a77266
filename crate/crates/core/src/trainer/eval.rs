use rayon::prelude::*;

use crate::dataio::{segment_offsets, Dataset, Split};
use crate::error::{Error, Result};
use crate::geomeval::{ap_range_with, nms, ApMode, Detection, EvalReport, Interval};
use crate::model::Network;

/// Anything that turns one raw segment into detections in segment
/// coordinates.
pub trait Detector: Sync {
    fn segment_length(&self) -> usize;

    /// `offset` is the segment's global start; most detectors ignore it.
    fn detect_segment(&self, offset: usize, samples: &[f32]) -> Result<Vec<Detection>>;

    /// IoU threshold of the cross-segment merge.
    fn merge_iou(&self) -> f64 {
        0.05
    }
}

impl Detector for Network<f32> {
    fn segment_length(&self) -> usize {
        self.config.segment_length
    }

    fn detect_segment(&self, _offset: usize, samples: &[f32]) -> Result<Vec<Detection>> {
        Network::detect_segment(self, samples)
    }

    fn merge_iou(&self) -> f64 {
        self.config.detect.nms_iou
    }
}

/// Test hook: reports every ground-truth event lying fully inside the
/// segment, with score 1.
pub struct OracleDetector {
    pub events: Vec<Interval>,
    pub segment_length: usize,
}

impl Detector for OracleDetector {
    fn segment_length(&self) -> usize {
        self.segment_length
    }

    fn detect_segment(&self, offset: usize, samples: &[f32]) -> Result<Vec<Detection>> {
        let seg = Interval::new(offset as i64, (offset + samples.len()) as i64)?;
        Ok(self
            .events
            .iter()
            .filter(|e| seg.contains(e))
            .map(|e| Detection::new(e.shift(-(offset as i64)), 1.0, None))
            .collect())
    }
}

/// Segment offsets covering `[start, end)`. Regions shorter than a segment
/// are widened to one full segment inside the recording.
pub fn region_segments(
    total: usize,
    start: usize,
    end: usize,
    segment_length: usize,
    overlap: f64,
) -> Result<Vec<usize>> {
    if segment_length > total {
        return Err(Error::InvalidArgument(format!(
            "recording of {total} samples is shorter than one segment ({segment_length})"
        )));
    }
    let (s, e) = if end - start < segment_length {
        let s = start.min(total - segment_length);
        (s, s + segment_length)
    } else {
        (start, end)
    };
    Ok(segment_offsets(e - s, segment_length, overlap)?
        .into_iter()
        .map(|o| o + s)
        .collect())
}

/// Runs a detector over `[start, end)` in overlapping segments and merges
/// the per-segment detections in global coordinates with a second NMS.
pub fn detect_region<D: Detector + ?Sized>(
    detector: &D,
    waveform: &[f32],
    start: usize,
    end: usize,
    overlap: f64,
) -> Result<Vec<Detection>> {
    let len = detector.segment_length();
    let offsets = region_segments(waveform.len(), start, end, len, overlap)?;
    let per_segment: Vec<Vec<Detection>> = offsets
        .par_iter()
        .map(|&o| {
            let mut dets = detector.detect_segment(o, &waveform[o..o + len])?;
            for d in &mut dets {
                d.interval = d.interval.shift(o as i64);
            }
            Ok(dets)
        })
        .collect::<Result<_>>()?;
    let all: Vec<Detection> = per_segment.into_iter().flatten().collect();
    Ok(nms(&all, detector.merge_iou()))
}

/// AP over `[.50, .95]` of a detector on one split's region.
pub fn evaluate<D: Detector + ?Sized>(
    detector: &D,
    dataset: &Dataset,
    split: Split,
    overlap: f64,
    mode: ApMode,
) -> Result<(EvalReport, Vec<Detection>)> {
    let (start, end) = dataset
        .split_region(split)
        .ok_or_else(|| Error::InvalidArgument(format!("split {split:?} has no events")))?;
    let dets = detect_region(detector, &dataset.waveform, start, end, overlap)?;
    let report = ap_range_with(&dets, &dataset.split_events(split), mode)?;
    Ok((report, dets))
}
