//! Template-matching baseline.
//!
//! Each template slides over the waveform producing a normalized
//! cross-correlation trace. Offsets whose correlation exceeds `mu` times the
//! trace's median absolute deviation become candidates spanning the template
//! length; candidates from all templates are then reduced by greedy
//! suppression keeping the highest correlation.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::geomeval::{ap_range_with, nms, ApMode, Detection, EvalReport, Interval};

/// Cosine similarity `<a, b> / (|a| |b|)`.
pub fn normalized_cc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("normalized_cc", a.len(), b.len()));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument(
            "normalized_cc of a zero-norm vector".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("median of an empty set".into()));
    }
    Ok(median_in_place(&mut values.to_vec()))
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Result<f64> {
    let m = median(values)?;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    Ok(median_in_place(&mut dev))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    samples: Vec<f64>,
    pub source_interval: Interval,
}

impl Template {
    pub fn new(samples: Vec<f64>, source_interval: Interval) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(
                "template needs at least 2 samples".into(),
            ));
        }
        if samples.iter().all(|&v| v == samples[0]) {
            return Err(Error::InvalidArgument("template is constant".into()));
        }
        Ok(Self {
            samples,
            source_interval,
        })
    }

    /// Cuts a template out of `waveform` at `interval`.
    pub fn from_waveform(waveform: &[f32], interval: Interval) -> Result<Self> {
        if interval.begin < 0 || interval.end as usize > waveform.len() {
            return Err(Error::InvalidArgument(format!(
                "template interval {interval} outside waveform of length {}",
                waveform.len()
            )));
        }
        let s = waveform[interval.begin as usize..interval.end as usize]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        Self::new(s, interval)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Correlation of one template at every offset, values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CcTrace {
    pub values: Vec<f64>,
}

/// Sliding correlation. Window norms come from running sums of `x` and `x^2`;
/// windows with zero energy score 0. With `zero_mean` both the template and
/// each window are centered first.
pub fn sliding_cc(template: &[f64], waveform: &[f64], zero_mean: bool) -> Result<CcTrace> {
    let m = template.len();
    if m == 0 || waveform.len() < m {
        return Err(Error::InvalidArgument(format!(
            "waveform of length {} shorter than template of length {m}",
            waveform.len()
        )));
    }
    let t_mean = if zero_mean {
        template.iter().sum::<f64>() / m as f64
    } else {
        0.0
    };
    let centered: Vec<f64> = template.iter().map(|v| v - t_mean).collect();
    let t_norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if t_norm == 0.0 {
        return Err(Error::InvalidArgument("template has zero norm".into()));
    }
    let n = waveform.len() - m + 1;
    let mut prefix = Vec::with_capacity(waveform.len() + 1);
    let mut prefix_sq = Vec::with_capacity(waveform.len() + 1);
    prefix.push(0.0);
    prefix_sq.push(0.0);
    for &x in waveform {
        prefix.push(prefix.last().unwrap() + x);
        prefix_sq.push(prefix_sq.last().unwrap() + x * x);
    }
    let mf = m as f64;
    let values = (0..n)
        .map(|off| {
            let s = prefix[off + m] - prefix[off];
            let sq = prefix_sq[off + m] - prefix_sq[off];
            let energy = if zero_mean { sq - s * s / mf } else { sq };
            // running sums lose a few ulps; tiny energies are treated as silence
            if energy <= 1e-12 * sq.max(1e-300) || energy <= 0.0 {
                return 0.0;
            }
            let window = &waveform[off..off + m];
            let dot: f64 = centered.iter().zip(window).map(|(a, b)| a * b).sum();
            (dot / (t_norm * energy.sqrt())).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(CcTrace { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TmConfig {
    /// Threshold multiplier on the MAD of each trace.
    pub mu: f64,
    pub zero_mean: bool,
    pub nms_iou: f64,
    /// Use at most this many templates, spread evenly over the candidates.
    pub max_templates: Option<usize>,
}

impl Default for TmConfig {
    fn default() -> Self {
        Self {
            mu: 8.0,
            zero_mean: false,
            nms_iou: 0.05,
            max_templates: Some(24),
        }
    }
}

/// Evenly spaced subset of `n` items of size at most `max`.
pub fn spread_indices(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(k) if k < n && k > 0 => (0..k).map(|i| i * n / k).collect(),
        Some(0) => Vec::new(),
        _ => (0..n).collect(),
    }
}

/// Candidates of a single template, before cross-template suppression.
pub fn template_candidates(
    template: &Template,
    waveform: &[f64],
    config: &TmConfig,
) -> Result<Vec<Detection>> {
    let trace = sliding_cc(template.samples(), waveform, config.zero_mean)?;
    let tau = config.mu * mad(&trace.values)?;
    let m = template.len() as i64;
    Ok(trace
        .values
        .iter()
        .enumerate()
        .filter(|&(_, &cc)| cc > tau)
        .map(|(off, &cc)| {
            let off = off as i64;
            Detection::new(
                Interval {
                    begin: off,
                    end: off + m,
                },
                cc,
                None,
            )
        })
        .collect())
}

pub fn detect_tm(
    templates: &[Template],
    waveform: &[f64],
    config: &TmConfig,
) -> Result<Vec<Detection>> {
    if config.mu <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "mu must be positive, got {}",
            config.mu
        )));
    }
    let chosen = spread_indices(templates.len(), config.max_templates);
    let per_template: Vec<Vec<Detection>> = chosen
        .par_iter()
        .filter_map(|&i| {
            let t = &templates[i];
            if t.len() > waveform.len() {
                warn!(
                    "skipping template {} of length {}: waveform has only {} samples",
                    t.source_interval,
                    t.len(),
                    waveform.len()
                );
                return None;
            }
            Some(template_candidates(t, waveform, config))
        })
        .collect::<Result<_>>()?;
    let candidates: Vec<Detection> = per_template.into_iter().flatten().collect();
    Ok(nms(&candidates, config.nms_iou))
}

/// Templates cut from every event of `split`.
pub fn split_templates(dataset: &Dataset, split: Split) -> Result<Vec<Template>> {
    dataset
        .split_events(split)
        .into_iter()
        .map(|e| Template::from_waveform(&dataset.waveform, e))
        .collect()
}

/// Runs the baseline with training-split templates over the region of
/// `split` and scores it against that split's events.
pub fn tm_baseline(
    dataset: &Dataset,
    split: Split,
    config: &TmConfig,
    mode: ApMode,
) -> Result<(EvalReport, Vec<Detection>)> {
    let templates = split_templates(dataset, Split::Train)?;
    let (start, end) = dataset
        .split_region(split)
        .ok_or_else(|| Error::InvalidArgument(format!("split {split:?} has no events")))?;
    let region: Vec<f64> = dataset.waveform[start..end]
        .iter()
        .map(|&v| f64::from(v))
        .collect();
    let mut dets = detect_tm(&templates, &region, config)?;
    for d in &mut dets {
        d.interval = d.interval.shift(start as i64);
    }
    let report = ap_range_with(&dets, &dataset.split_events(split), mode)?;
    Ok((report, dets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cc_extremes() {
        let a = [1.0, -2.0, 3.5];
        assert!((normalized_cc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((normalized_cc(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(normalized_cc(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(normalized_cc(&[0.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&[4.0; 6]).unwrap(), 0.0);
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 1.0);
        assert_eq!(mad(&[1.0, 1.0, 2.0, 2.0, 4.0, 6.0, 9.0]).unwrap(), 1.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(mad(&[]).is_err());
    }

    #[test]
    fn trace_length() {
        let t = sliding_cc(&[1.0, 2.0, 1.0], &[0.0; 10], false).unwrap();
        assert_eq!(t.values.len(), 8);
        assert!(t.values.iter().all(|&v| v == 0.0));
        assert!(sliding_cc(&[1.0; 11], &[0.0; 10], false).is_err());
    }

    #[test]
    fn constant_template_rejected() {
        let iv = Interval::new(0, 3).unwrap();
        assert!(Template::new(vec![2.0; 3], iv).is_err());
        assert!(Template::new(vec![2.0], iv).is_err());
    }

    #[test]
    fn spread_picks_evenly() {
        assert_eq!(spread_indices(10, Some(3)), vec![0, 3, 6]);
        assert_eq!(spread_indices(2, Some(3)), vec![0, 1]);
        assert_eq!(spread_indices(4, None), vec![0, 1, 2, 3]);
    }
}
