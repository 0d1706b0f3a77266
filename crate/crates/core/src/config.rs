//! Model, training and run configuration with the two presets.
//!
//! `desk` is a CPU-sized network trainable in minutes; `full` reproduces the
//! published layer table. A [`RunConfig`] JSON file is merged over the chosen
//! preset, so a file only needs the keys it changes; unknown keys are errors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataio::SynthConfig;
use crate::error::{Error, Result};
use crate::geomeval::ApMode;
use crate::tmatch::TmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::InvalidArgument(format!("unknown preset '{other}'"))),
        }
    }
}

/// Stem, then one dense block per stage with a transition between
/// consecutive stages. The last `num_scales` stages feed the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub stem_channels: usize,
    pub stem_kernel: usize,
    /// Growth rate of each stage's dense block.
    pub growth_rates: Vec<usize>,
    pub layers_per_block: usize,
    /// Output channels of the 1x1 convolution in the transition after stage
    /// `i`; `None` means pooling only. One entry per transition.
    pub transition_compress: Vec<Option<usize>>,
    pub num_scales: usize,
    pub proposal_feature_dim: usize,
}

impl BackboneConfig {
    pub fn num_stages(&self) -> usize {
        self.growth_rates.len()
    }

    pub fn first_detection_stage(&self) -> usize {
        self.num_stages() - self.num_scales
    }

    /// Stride of stage `i` on the input: the stem downsamples by 4, each
    /// transition by 2.
    pub fn stage_stride(&self, stage: usize) -> usize {
        4 << stage
    }

    pub fn scale_stride(&self, scale: usize) -> usize {
        self.stage_stride(self.first_detection_stage() + scale)
    }

    /// `(input_channels, output_channels)` of every stage's dense block.
    pub fn stage_channels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_stages());
        let mut ch = self.stem_channels;
        for (i, &k) in self.growth_rates.iter().enumerate() {
            if i > 0 {
                if let Some(c) = self.transition_compress[i - 1] {
                    ch = c;
                }
            }
            let end = ch + k * self.layers_per_block;
            out.push((ch, end));
            ch = end;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_stages();
        if n == 0 || self.layers_per_block == 0 && self.growth_rates.iter().any(|&k| k > 0) {
            return Err(Error::Config("backbone needs at least one stage".into()));
        }
        if self.transition_compress.len() + 1 != n {
            return Err(Error::Config(format!(
                "{} stages need {} transition entries, got {}",
                n,
                n - 1,
                self.transition_compress.len()
            )));
        }
        if self.num_scales == 0 || self.num_scales > n {
            return Err(Error::Config(format!(
                "num_scales {} must be in 1..={n}",
                self.num_scales
            )));
        }
        if self.stem_channels == 0 || self.stem_kernel.is_multiple_of(2) {
            return Err(Error::Config(
                "stem needs channels > 0 and an odd kernel".into(),
            ));
        }
        let chans = self.stage_channels();
        for (s, &(_, out)) in chans.iter().enumerate().skip(self.first_detection_stage()) {
            if out != self.proposal_feature_dim {
                return Err(Error::Config(format!(
                    "detection stage {s} emits {out} channels, expected proposal_feature_dim {}",
                    self.proposal_feature_dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextConfig {
    pub enabled: bool,
    pub dilations: Vec<usize>,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            dilations: vec![4, 8, 12],
        }
    }
}

/// Weights of the joint loss and the label-noise rates they derive from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossParams {
    /// Weight of positive proposals in the classification loss; negatives
    /// get `1 - alpha`.
    pub alpha: f64,
    /// Weight of the regression loss.
    pub lambda: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 1.0,
            rho_plus: 0.0,
            rho_minus: 0.0,
        }
    }
}

impl LossParams {
    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda {} must be >= 0",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    pub positive_iou: f64,
    pub negative_iou: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            positive_iou: 0.5,
            negative_iou: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
    /// Width offsets above this are clamped before decoding.
    pub max_dw: f64,
    pub logit_clamp: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.5,
            nms_iou: 0.05,
            max_dw: 4.0,
            logit_clamp: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub segment_length: usize,
    pub backbone: BackboneConfig,
    /// Anchor width of each detection scale, in samples.
    pub anchor_sizes: Vec<f64>,
    pub context: ContextConfig,
    /// Detection scales in use; `None` uses all of them.
    pub scales: Option<Vec<usize>>,
    pub labels: LabelConfig,
    /// Proposals sampled per scale and segment during training.
    pub quotas: Vec<usize>,
    pub loss: LossParams,
    pub detect: DetectConfig,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Full => Self::full(),
        }
    }

    /// The published layer table: seven detection stages of 240 channels at
    /// strides 16..1024 with anchors 128..8192.
    pub fn full() -> Self {
        let mut compress = vec![None, None];
        compress.extend(std::iter::repeat_n(Some(120), 6));
        Self {
            segment_length: 24_576,
            backbone: BackboneConfig {
                stem_channels: 24,
                stem_kernel: 7,
                growth_rates: vec![12, 12, 12, 20, 20, 20, 20, 20, 20],
                layers_per_block: 6,
                transition_compress: compress,
                num_scales: 7,
                proposal_feature_dim: 240,
            },
            anchor_sizes: (0..7).map(|i| 128.0 * f64::from(1u32 << i)).collect(),
            context: ContextConfig::default(),
            scales: None,
            labels: LabelConfig::default(),
            quotas: vec![64, 64, 64, 64, 32, 32, 16],
            loss: LossParams::default(),
            detect: DetectConfig::default(),
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
            init_seed: 0,
        }
    }

    /// CPU-sized network: four detection stages of 64 channels at strides
    /// 64..512 with anchors 512..4096, sized for events of a few hundred to a
    /// few thousand samples.
    pub fn desk() -> Self {
        let mut compress = vec![None];
        compress.extend(std::iter::repeat_n(Some(32), 6));
        Self {
            segment_length: 8192,
            backbone: BackboneConfig {
                stem_channels: 16,
                stem_kernel: 7,
                growth_rates: vec![8; 8],
                layers_per_block: 4,
                transition_compress: compress,
                num_scales: 4,
                proposal_feature_dim: 64,
            },
            anchor_sizes: vec![512.0, 1024.0, 2048.0, 4096.0],
            context: ContextConfig::default(),
            scales: None,
            labels: LabelConfig::default(),
            quotas: vec![64, 32, 16, 8],
            loss: LossParams::default(),
            detect: DetectConfig::default(),
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
            init_seed: 0,
        }
    }

    pub fn num_scales(&self) -> usize {
        self.backbone.num_scales
    }

    pub fn active_scales(&self) -> Vec<usize> {
        self.scales
            .clone()
            .unwrap_or_else(|| (0..self.num_scales()).collect())
    }

    pub fn scale_stride(&self, scale: usize) -> usize {
        self.backbone.scale_stride(scale)
    }

    /// The segment length must be a multiple of the deepest stage stride.
    pub fn required_multiple(&self) -> usize {
        self.backbone.stage_stride(self.backbone.num_stages() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.loss.validate()?;
        let n = self.num_scales();
        if self.anchor_sizes.len() != n || self.quotas.len() != n {
            return Err(Error::Config(format!(
                "{n} scales need {n} anchor sizes and quotas (got {} and {})",
                self.anchor_sizes.len(),
                self.quotas.len()
            )));
        }
        if self.anchor_sizes.iter().any(|&a| a.is_nan() || a <= 0.0) {
            return Err(Error::Config("anchor sizes must be positive".into()));
        }
        let scales = self.active_scales();
        if scales.is_empty() || scales.iter().any(|&s| s >= n) {
            return Err(Error::Config(format!(
                "active scales {scales:?} must be a non-empty subset of 0..{n}"
            )));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "active scales {scales:?} must be strictly increasing"
            )));
        }
        let m = self.required_multiple();
        if !self.segment_length.is_multiple_of(m) || self.segment_length < 2 * m {
            return Err(Error::InputLength {
                length: self.segment_length,
                multiple: m,
            });
        }
        if self.context.dilations.contains(&0) {
            return Err(Error::Config("dilations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub overlap: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_grad_norm: Option<f64>,
    /// Cap on training segments per epoch (all when `None`).
    pub max_segments_per_epoch: Option<usize>,
    pub validate_every_epoch: bool,
    pub ap_mode: ApMode,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            initial_lr: 5e-4,
            lr_decay: 0.1,
            lr_decay_every: 10,
            overlap: 0.5,
            seed: 0,
            clip_grad_norm: Some(10.0),
            max_segments_per_epoch: None,
            validate_every_epoch: true,
            ap_mode: ApMode::UniqueRecall,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    /// `initial_lr * lr_decay ^ floor(epoch / lr_decay_every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = epoch / self.lr_decay_every.max(1);
        self.initial_lr * self.lr_decay.powi(steps as i32)
    }
}

/// Everything a command needs, reproducible from this record plus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tm: TmConfig,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        Self {
            preset: p,
            synth: SynthConfig::default(),
            model: ModelConfig::preset(p),
            train: TrainConfig::default(),
            tm: TmConfig::default(),
            threads: None,
        }
    }

    /// Merges a (possibly partial) JSON object over a preset. The preset is
    /// `preset_override`, else the file's `preset` key, else desk.
    pub fn from_json(text: &str, preset_override: Option<Preset>) -> Result<Self> {
        let user: serde_json::Value = serde_json::from_str(text)?;
        if !user.is_object() {
            return Err(Error::Config("run config must be a JSON object".into()));
        }
        let preset = match preset_override {
            Some(p) => p,
            None => match user.get("preset") {
                Some(v) => serde_json::from_value(v.clone())?,
                None => Preset::Desk,
            },
        };
        let mut base = serde_json::to_value(Self::preset(preset))?;
        merge_json(&mut base, user);
        base["preset"] = serde_json::to_value(preset)?;
        let cfg: RunConfig = serde_json::from_value(base)?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Recursive object merge; non-object values in `overlay` replace.
pub fn merge_json(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
