//! Greedy matching, precision-recall and average precision.
//!
//! The default [`ApMode::UniqueRecall`] averages, over every distinct recall
//! value reached along the score-ordered PR sequence, the highest precision
//! reached at that recall or beyond. [`ApMode::Coco101`] is the familiar
//! 101-point interpolation, kept for comparison.

use serde::{Deserialize, Serialize};

use super::{iou_1d, sort_detections, Detection, Interval};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    #[default]
    UniqueRecall,
    Coco101,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95, computed as exact hundredths.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// True/false-positive flags for detections already in processing order.
/// A detection is a true positive when some unmatched ground truth has
/// IoU >= `tau` with it; the best such ground truth is consumed.
pub fn match_detections(dets: &[Detection], gts: &[Interval], tau: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let iou = iou_1d(&d.interval, gt);
                if iou >= tau && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            best.is_some()
        })
        .collect()
}

/// `(recall, precision)` after each detection in order.
pub fn precision_recall(flags: &[bool], num_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    flags
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            tp += usize::from(f);
            (tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

fn ap_from_curve(curve: &[(f64, f64)], mode: ApMode) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    // precision envelope: best precision at this recall or any later point
    let mut envelope: Vec<f64> = curve.iter().map(|&(_, p)| p).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match mode {
        ApMode::UniqueRecall => {
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut last: Option<f64> = None;
            for (i, &(r, _)) in curve.iter().enumerate() {
                // recall is non-decreasing, so the first occurrence of a
                // value carries the envelope maximum for it
                if last != Some(r) {
                    sum += envelope[i];
                    count += 1;
                    last = Some(r);
                }
            }
            sum / count as f64
        }
        ApMode::Coco101 => {
            let mut sum = 0.0;
            let mut j = 0;
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                while j < curve.len() && curve[j].0 < r {
                    j += 1;
                }
                if j < curve.len() {
                    sum += envelope[j];
                }
            }
            sum / 101.0
        }
    }
}

pub fn average_precision(dets: &[Detection], gts: &[Interval], tau: f64) -> Result<f64> {
    average_precision_with(dets, gts, tau, ApMode::default())
}

pub fn average_precision_with(
    dets: &[Detection],
    gts: &[Interval],
    tau: f64,
    mode: ApMode,
) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::InvalidArgument(
            "average precision needs at least one ground truth".into(),
        ));
    }
    let mut sorted = dets.to_vec();
    sort_detections(&mut sorted);
    let flags = match_detections(&sorted, gts, tau);
    Ok(ap_from_curve(&precision_recall(&flags, gts.len()), mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_per_threshold: Vec<f64>,
    pub map: f64,
    /// Counts at IoU 0.50.
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
    #[serde(skip)]
    pub pr_curves: Vec<Vec<(f64, f64)>>,
}

impl EvalReport {
    pub fn ap50(&self) -> f64 {
        self.ap_per_threshold[0]
    }

    pub fn ap_at(&self, tau: f64) -> Option<f64> {
        iou_thresholds()
            .iter()
            .position(|&t| (t - tau).abs() < 1e-9)
            .map(|i| self.ap_per_threshold[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// AP at each of the ten thresholds and their mean.
pub fn ap_range(dets: &[Detection], gts: &[Interval]) -> Result<EvalReport> {
    ap_range_with(dets, gts, ApMode::default())
}

pub fn ap_range_with(dets: &[Detection], gts: &[Interval], mode: ApMode) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::InvalidArgument(
            "average precision needs at least one ground truth".into(),
        ));
    }
    let mut sorted = dets.to_vec();
    sort_detections(&mut sorted);
    let mut aps = Vec::with_capacity(10);
    let mut curves = Vec::with_capacity(10);
    let mut counts = (0, 0);
    for (i, tau) in iou_thresholds().into_iter().enumerate() {
        let flags = match_detections(&sorted, gts, tau);
        if i == 0 {
            let tp = flags.iter().filter(|&&f| f).count();
            counts = (tp, flags.len() - tp);
        }
        let curve = precision_recall(&flags, gts.len());
        aps.push(ap_from_curve(&curve, mode));
        curves.push(curve);
    }
    let map = aps.iter().sum::<f64>() / aps.len() as f64;
    Ok(EvalReport {
        ap_per_threshold: aps,
        map,
        tp: counts.0,
        fp: counts.1,
        missed: gts.len() - counts.0,
        pr_curves: curves,
    })
}
