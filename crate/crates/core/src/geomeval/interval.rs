use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open span `[begin, end)` of sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub begin: i64,
    pub end: i64,
}

impl Interval {
    pub fn new(begin: i64, end: i64) -> Result<Self> {
        if begin >= end {
            return Err(Error::InvalidInterval { begin, end });
        }
        Ok(Self { begin, end })
    }

    pub fn len(&self) -> i64 {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    pub fn center(&self) -> f64 {
        (self.begin + self.end) as f64 / 2.0
    }

    pub fn shift(&self, by: i64) -> Self {
        Self {
            begin: self.begin + by,
            end: self.end + by,
        }
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.begin < other.end && other.begin < self.end
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.begin <= other.begin && other.end <= self.end
    }

    pub fn as_span(&self) -> (f64, f64) {
        (self.begin as f64, self.end as f64)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.begin, self.end)
    }
}

/// Overlap length over the span from the leftmost begin to the rightmost end.
pub fn iou_span(a: (f64, f64), b: (f64, f64)) -> f64 {
    let overlap = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let span = a.1.max(b.1) - a.0.min(b.0);
    if span <= 0.0 {
        return 0.0;
    }
    overlap / span
}

pub fn iou_1d(a: &Interval, b: &Interval) -> f64 {
    let overlap = (a.end.min(b.end) - a.begin.max(b.begin)).max(0);
    let span = a.end.max(b.end) - a.begin.min(b.begin);
    overlap as f64 / span as f64
}

/// A scored interval. `scale_index` is `None` for detections that do not come
/// from a network scale (the template-matching baseline).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub interval: Interval,
    pub score: f64,
    pub scale_index: Option<usize>,
}

impl Detection {
    pub fn new(interval: Interval, score: f64, scale_index: Option<usize>) -> Self {
        Self {
            interval,
            score,
            scale_index,
        }
    }
}
