//! 1D interval geometry and the average-precision protocol.

mod ap;
mod interval;
mod nms;

pub use ap::{
    ap_range, ap_range_with, average_precision, average_precision_with, iou_thresholds,
    match_detections, precision_recall, ApMode, EvalReport,
};
pub use interval::{iou_1d, iou_span, Detection, Interval};
pub use nms::{detection_order, nms, sort_detections};
