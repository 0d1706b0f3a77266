//! Naive reference implementations shared by the property and acceptance
//! tests. Written independently of the library code paths they check.
#![allow(dead_code)]

use ccrcnn::geomeval::{Detection, Interval};

/// IoU by counting samples: intersection size over the size of the range
/// from the leftmost begin to the rightmost end.
pub fn iou_by_counting(a: &Interval, b: &Interval) -> f64 {
    let lo = a.begin.min(b.begin);
    let hi = a.end.max(b.end);
    let inter = (lo..hi)
        .filter(|&t| a.begin <= t && t < a.end && b.begin <= t && t < b.end)
        .count();
    inter as f64 / (hi - lo) as f64
}

fn order_key(d: &Detection) -> (std::cmp::Reverse<u64>, i64, i64, i64) {
    // scores in tests are non-negative, where bit patterns order like values
    let scale = d.scale_index.map_or(-1, |s| s as i64);
    (
        std::cmp::Reverse(d.score.to_bits()),
        d.interval.begin,
        scale,
        d.interval.end,
    )
}

pub fn sorted(dets: &[Detection]) -> Vec<Detection> {
    let mut v = dets.to_vec();
    v.sort_by_key(order_key);
    v
}

pub fn naive_nms(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let order = sorted(dets);
    let mut suppressed = vec![false; order.len()];
    let mut out = Vec::new();
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        out.push(order[i]);
        for j in i + 1..order.len() {
            if iou_by_counting(&order[i].interval, &order[j].interval) > thr {
                suppressed[j] = true;
            }
        }
    }
    out
}

/// Greedy matching in processing order, re-derived with explicit loops.
pub fn naive_flags(dets: &[Detection], gts: &[Interval], tau: f64) -> Vec<bool> {
    let order = sorted(dets);
    let mut used = vec![false; gts.len()];
    let mut flags = Vec::new();
    for d in &order {
        let mut pick: Option<usize> = None;
        for g in 0..gts.len() {
            if used[g] || iou_by_counting(&d.interval, &gts[g]) < tau {
                continue;
            }
            pick = match pick {
                Some(p)
                    if iou_by_counting(&d.interval, &gts[p])
                        >= iou_by_counting(&d.interval, &gts[g]) =>
                {
                    Some(p)
                }
                _ => Some(g),
            };
        }
        if let Some(p) = pick {
            used[p] = true;
        }
        flags.push(pick.is_some());
    }
    flags
}

/// Mean over unique recall values of the best precision at that recall or
/// later, with every comparison done on exact fractions.
pub fn naive_ap(flags: &[bool], num_gt: usize) -> f64 {
    let tps: Vec<usize> = flags
        .iter()
        .scan(0, |acc, &f| {
            *acc += usize::from(f);
            Some(*acc)
        })
        .collect();
    assert!(tps.last().is_none_or(|&t| t <= num_gt));
    let mut recalls: Vec<usize> = tps.clone();
    recalls.dedup();
    if recalls.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &r in &recalls {
        // best fraction tp_k / k over k with tp_k >= r
        let mut best: Option<(usize, usize)> = None;
        for (k, &tp) in tps.iter().enumerate() {
            if tp < r {
                continue;
            }
            let cand = (tp, k + 1);
            best = match best {
                Some((n, d)) if n * cand.1 >= cand.0 * d => Some((n, d)),
                _ => Some(cand),
            };
        }
        let (n, d) = best.expect("recall reached");
        sum += n as f64 / d as f64;
    }
    sum / recalls.len() as f64
}

/// Label oracle: best IoU by the f64 formula, ties to the earlier begin.
pub fn naive_label(
    center: f64,
    width: f64,
    gts: &[Interval],
    pos: f64,
    neg: f64,
) -> (u8, Option<usize>) {
    let (a0, a1) = (center - width / 2.0, center + width / 2.0);
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in gts.iter().enumerate() {
        let (b0, b1) = (g.begin as f64, g.end as f64);
        let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
        let iou = inter / (a1.max(b1) - a0.min(b0));
        if iou <= 0.0 {
            continue;
        }
        best = match best {
            Some((j, v)) if v > iou || (v == iou && gts[j].begin <= g.begin) => Some((j, v)),
            _ => Some((i, iou)),
        };
    }
    let v = best.map_or(0.0, |b| b.1);
    let class = if v > pos {
        0
    } else if v < neg {
        1
    } else {
        2
    };
    (class, best.map(|b| b.0))
}

/// Naive normalized cross-correlation of a template at every offset.
pub fn naive_sliding_cc(template: &[f64], wave: &[f64], zero_mean: bool) -> Vec<f64> {
    let m = template.len();
    let prep = |v: &[f64]| -> Vec<f64> {
        if zero_mean {
            let mu = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - mu).collect()
        } else {
            v.to_vec()
        }
    };
    let t = prep(template);
    let tn = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..=wave.len() - m)
        .map(|o| {
            let w = prep(&wave[o..o + m]);
            let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if wn == 0.0 {
                0.0
            } else {
                t.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / (tn * wn)
            }
        })
        .collect()
}

pub fn det(b: i64, e: i64, score: f64) -> Detection {
    Detection::new(Interval::new(b, e).unwrap(), score, Some(0))
}
