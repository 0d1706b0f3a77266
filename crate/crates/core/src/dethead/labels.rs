use super::{encode_offsets, Anchor};
use crate::config::LabelConfig;
use crate::error::Result;
use crate::geomeval::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelClass {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalLabel {
    pub class: LabelClass,
    pub matched_gt: Option<usize>,
    /// `(t_x, t_w)` for positives.
    pub targets: Option<(f64, f64)>,
    pub best_iou: f64,
}

/// Best-IoU ground truth per anchor; ties go to the earlier-starting one.
fn best_match(anchor: &Anchor, gts: &[Interval]) -> (Option<usize>, f64) {
    let mut best: (Option<usize>, f64) = (None, 0.0);
    for (g, gt) in gts.iter().enumerate() {
        let iou = anchor.iou(gt);
        let better = match best.0 {
            None => iou > 0.0,
            Some(b) => iou > best.1 || (iou == best.1 && gt.begin < gts[b].begin),
        };
        if better {
            best = (Some(g), iou);
        }
    }
    best
}

pub fn assign_labels(
    anchors: &[Anchor],
    gts: &[Interval],
    cfg: &LabelConfig,
) -> Result<Vec<ProposalLabel>> {
    assign_labels_with_ignore(anchors, gts, &[], cfg)
}

/// Like [`assign_labels`], but anchors that would be negative while
/// overlapping an `ignore` interval at IoU >= `negative_iou` become neutral.
/// Used for events cut by the segment boundary.
pub fn assign_labels_with_ignore(
    anchors: &[Anchor],
    gts: &[Interval],
    ignore: &[Interval],
    cfg: &LabelConfig,
) -> Result<Vec<ProposalLabel>> {
    anchors
        .iter()
        .map(|a| {
            let (matched, iou) = best_match(a, gts);
            if iou > cfg.positive_iou {
                let g = matched.expect("positive IoU implies a match");
                return Ok(ProposalLabel {
                    class: LabelClass::Positive,
                    matched_gt: Some(g),
                    targets: Some(encode_offsets(a, &gts[g])?),
                    best_iou: iou,
                });
            }
            let near_ignored = ignore.iter().any(|r| a.iou(r) >= cfg.negative_iou);
            let class = if iou < cfg.negative_iou && !near_ignored {
                LabelClass::Negative
            } else {
                LabelClass::Neutral
            };
            Ok(ProposalLabel {
                class,
                matched_gt: matched,
                targets: None,
                best_iou: iou,
            })
        })
        .collect()
}
