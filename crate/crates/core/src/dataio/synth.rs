//! Synthetic seismic-like recordings with exact event annotations.
//!
//! Each event is a sinusoidal burst under an envelope that jumps to 5% of its
//! peak at the onset, rises linearly over the first tenth of the event and
//! then decays exponentially back to 5% at the last sample. The annotation is
//! exactly the set of samples where the envelope is at least 5% of the peak.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomeval::Interval;

/// Fraction of the peak at which an event's support ends.
pub const SUPPORT_LEVEL: f64 = 0.05;
const RISE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub total_length: usize,
    pub event_count: usize,
    /// Median of the log-normal length distribution, in samples.
    pub median_length: f64,
    /// Shape parameter of the log-normal length distribution.
    pub length_sigma: f64,
    pub min_length: usize,
    pub max_length: usize,
    pub noise_sigma: f64,
    pub min_gap: usize,
    pub amplitude_range: (f64, f64),
    /// Carrier frequency range in cycles per sample.
    pub frequency_range: (f64, f64),
    /// Fractions of events (in order) assigned to train and validation; the
    /// rest is the test split.
    pub split_fractions: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            total_length: 3_400_000,
            event_count: 1000,
            median_length: 1500.0,
            length_sigma: 0.55,
            min_length: 200,
            max_length: 8192,
            noise_sigma: 0.1,
            min_gap: 200,
            amplitude_range: (0.5, 2.0),
            frequency_range: (0.01, 0.08),
            split_fractions: (0.8, 0.1),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub waveform: Vec<f32>,
    /// Sorted, non-overlapping.
    pub events: Vec<Interval>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn new(waveform: Vec<f32>, events: Vec<Interval>) -> Result<Self> {
        validate_events(&events, waveform.len())?;
        Ok(Self {
            waveform,
            events,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        })
    }

    /// Contiguous split by event index.
    pub fn with_fraction_splits(mut self, train: f64, val: f64) -> Self {
        let n = self.events.len();
        let n_train = ((n as f64 * train).round() as usize).min(n);
        let n_val = ((n as f64 * val).round() as usize).min(n - n_train);
        self.train = (0..n_train).collect();
        self.val = (n_train..n_train + n_val).collect();
        self.test = (n_train + n_val..n).collect();
        self
    }

    pub fn split_indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_events(&self, split: Split) -> Vec<Interval> {
        self.split_indices(split)
            .iter()
            .map(|&i| self.events[i])
            .collect()
    }

    /// Waveform range owned by a split: from the middle of the gap before its
    /// first event to the middle of the gap after its last one (or the
    /// recording edges). `None` for an empty split.
    pub fn split_region(&self, split: Split) -> Option<(usize, usize)> {
        let idx = self.split_indices(split);
        let (&first, &last) = (idx.first()?, idx.last()?);
        let start = if first == 0 {
            0
        } else {
            ((self.events[first - 1].end + self.events[first].begin) / 2) as usize
        };
        let end = if last + 1 >= self.events.len() {
            self.waveform.len()
        } else {
            ((self.events[last].end + self.events[last + 1].begin) / 2) as usize
        };
        Some((start, end))
    }
}

pub(crate) fn validate_events(events: &[Interval], length: usize) -> Result<()> {
    for (i, e) in events.iter().enumerate() {
        if e.begin >= e.end || e.begin < 0 || e.end as usize > length {
            return Err(Error::InvalidArgument(format!(
                "event {i} {e} invalid for waveform of length {length}"
            )));
        }
        if i > 0 && events[i - 1].end > e.begin {
            return Err(Error::InvalidArgument(format!(
                "event {i} {e} overlaps or precedes {}",
                events[i - 1]
            )));
        }
    }
    Ok(())
}

/// Envelope of an event of `n` samples, peak 1. Every value is at least
/// [`SUPPORT_LEVEL`]; samples outside the event are implicitly zero.
pub fn event_envelope(n: usize) -> Vec<f64> {
    let rise = ((n as f64 * RISE_FRACTION).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let decay_len = (n - 1).saturating_sub(rise).max(1) as f64;
    let rate = (1.0 / SUPPORT_LEVEL).ln() / decay_len;
    (0..n)
        .map(|t| {
            if t < rise {
                SUPPORT_LEVEL + (1.0 - SUPPORT_LEVEL) * t as f64 / rise as f64
            } else {
                (-rate * (t - rise) as f64).exp().max(SUPPORT_LEVEL)
            }
        })
        .collect()
}

fn draw_lengths(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let dist = LogNormal::new(config.median_length.ln(), config.length_sigma)
        .map_err(|e| Error::Config(format!("length distribution: {e}")))?;
    Ok((0..config.event_count)
        .map(|_| (dist.sample(rng).round() as usize).clamp(config.min_length, config.max_length))
        .collect())
}

/// Generates a dataset; identical configs give bit-identical output.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    if config.min_length < 2 || config.min_length > config.max_length {
        return Err(Error::Config(format!(
            "event length range [{}, {}] invalid",
            config.min_length, config.max_length
        )));
    }
    let (a_lo, a_hi) = config.amplitude_range;
    let (f_lo, f_hi) = config.frequency_range;
    if !(0.0 < a_lo && a_lo <= a_hi) || !(0.0 < f_lo && f_lo <= f_hi && f_hi <= 0.5) {
        return Err(Error::Config("amplitude or frequency range invalid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lengths = draw_lengths(config, &mut rng)?;
    let needed: usize = lengths.iter().sum::<usize>() + (config.event_count + 1) * config.min_gap;
    if needed > config.total_length {
        return Err(Error::Config(format!(
            "cannot pack {} events: they need {needed} samples but total_length is {}",
            config.event_count, config.total_length
        )));
    }

    // spread the slack over the gaps with sorted uniform cut points
    let slack = config.total_length - needed;
    let mut cuts: Vec<usize> = (0..config.event_count)
        .map(|_| rng.gen_range(0..=slack))
        .collect();
    cuts.sort_unstable();
    let mut events = Vec::with_capacity(config.event_count);
    let mut cursor = 0usize;
    let mut prev_cut = 0usize;
    for (&len, &cut) in lengths.iter().zip(&cuts) {
        cursor += config.min_gap + (cut - prev_cut);
        prev_cut = cut;
        events.push(Interval {
            begin: cursor as i64,
            end: (cursor + len) as i64,
        });
        cursor += len;
    }

    let noise = Normal::new(0.0, config.noise_sigma.max(0.0))
        .map_err(|e| Error::Config(format!("noise: {e}")))?;
    let mut wave: Vec<f64> = (0..config.total_length)
        .map(|_| noise.sample(&mut rng))
        .collect();
    for ev in &events {
        let n = ev.len() as usize;
        let amp = rng.gen_range(a_lo..=a_hi);
        let freq = rng.gen_range(f_lo..=f_hi);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let env = event_envelope(n);
        debug_assert!(env.iter().all(|&e| e >= SUPPORT_LEVEL));
        for (t, e) in env.iter().enumerate() {
            let carrier = (std::f64::consts::TAU * freq * t as f64 + phase).sin();
            wave[ev.begin as usize + t] += amp * e * carrier;
        }
    }
    let waveform = wave.into_iter().map(|v| v as f32).collect();
    let (train, val) = config.split_fractions;
    Ok(Dataset::new(waveform, events)?.with_fraction_splits(train, val))
}
