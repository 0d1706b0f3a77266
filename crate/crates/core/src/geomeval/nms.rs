use std::cmp::Ordering;

use super::{iou_1d, Detection};

/// Processing order for detections: higher score first, then earlier begin,
/// then smaller scale index.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.interval.begin.cmp(&b.interval.begin))
        .then(a.scale_index.cmp(&b.scale_index))
        .then(a.interval.end.cmp(&b.interval.end))
}

pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(detection_order);
}

/// Greedy non-maximum suppression: a detection survives unless it overlaps
/// an already kept one with IoU strictly above `iou_threshold`.
pub fn nms(candidates: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = candidates.to_vec();
    sort_detections(&mut sorted);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        if kept
            .iter()
            .all(|k| iou_1d(&k.interval, &d.interval) <= iou_threshold)
        {
            kept.push(d);
        }
    }
    kept
}
