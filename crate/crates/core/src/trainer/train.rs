use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::evaluate;
use crate::backbone::save_checkpoint;
use crate::config::TrainConfig;
use crate::dataio::{write_waveform, Dataset, Split};
use crate::dethead::{
    assign_labels_with_ignore, generate_anchors, joint_loss_with_grads, sample_proposals,
    ProposalOutput,
};
use crate::error::{Error, Result};
use crate::geomeval::Interval;
use crate::model::{Network, ScaleGrad};
use crate::nnengine::{clip_grad_norm, grad_norm, zero_grads, AdamConfig, AdamState, Mode, Tensor};

/// Ground truth of one segment in segment coordinates. Events cut by the
/// segment edge are `ignore` regions rather than targets.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SegmentTargets {
    pub gts: Vec<Interval>,
    pub ignore: Vec<Interval>,
}

pub fn segment_targets(events: &[Interval], offset: usize, length: usize) -> SegmentTargets {
    let seg = Interval::new(offset as i64, (offset + length) as i64).expect("non-empty segment");
    let mut t = SegmentTargets::default();
    for e in events.iter().filter(|e| e.overlaps(&seg)) {
        let local = e.shift(-(offset as i64));
        if seg.contains(e) {
            t.gts.push(local);
        } else {
            t.ignore.push(local);
        }
    }
    t
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub loss: f64,
    pub classification: f64,
    pub regression: f64,
    pub positives: usize,
    pub sampled: usize,
    pub grad_norm: f64,
}

/// One optimizer step on one segment: forward, label, sample, joint loss,
/// backward, optional clipping, Adam update.
pub fn train_step<R: rand::Rng>(
    net: &mut Network<f32>,
    adam: &mut AdamState<f32>,
    samples: &[f32],
    targets: &SegmentTargets,
    rng: &mut R,
    clip: Option<f64>,
) -> Result<StepStats> {
    let cfg = net.config.clone();
    let x = net.prepare_input(samples)?;
    let (outputs, cache) = net.forward(&x, Mode::Train)?;
    let mut labels = vec![None; cfg.num_scales()];
    for o in &outputs {
        let anchors = generate_anchors(&cfg, cfg.segment_length, o.scale_index)?;
        labels[o.scale_index] = Some(assign_labels_with_ignore(
            &anchors,
            &targets.gts,
            &targets.ignore,
            &cfg.labels,
        )?);
    }
    let sampled = sample_proposals(&labels, &cfg.quotas, rng);
    let by_scale = |s: usize| {
        outputs
            .iter()
            .find(|o| o.scale_index == s)
            .expect("sampled from active scale")
    };
    let po: Vec<ProposalOutput> = sampled
        .iter()
        .map(|s| {
            let o = by_scale(s.scale);
            ProposalOutput {
                logit: f64::from(o.logits.get(s.node, 0)),
                dx: f64::from(o.offsets.get(s.node, 0)),
                dw: f64::from(o.offsets.get(s.node, 1)),
            }
        })
        .collect();
    let (loss, grads) = joint_loss_with_grads(&po, &sampled, &cfg.loss, cfg.detect.logit_clamp)?;
    let positives = sampled.iter().filter(|s| s.positive).count();
    if !loss.total.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss {} (classification {}, regression {}) with {} sampled, {positives} positive",
            loss.total,
            loss.classification,
            loss.regression,
            sampled.len()
        )));
    }
    let mut scale_grads: Vec<ScaleGrad<f32>> = outputs
        .iter()
        .map(|o| ScaleGrad {
            scale_index: o.scale_index,
            logits: Tensor::zeros(o.logits.length(), 1),
            offsets: Tensor::zeros(o.offsets.length(), 2),
        })
        .collect();
    for (s, g) in sampled.iter().zip(&grads) {
        let sg = scale_grads
            .iter_mut()
            .find(|x| x.scale_index == s.scale)
            .expect("sampled from active scale");
        let v = sg.logits.get(s.node, 0);
        sg.logits.set(s.node, 0, v + g.logit as f32);
        let r = sg.offsets.row_mut(s.node);
        r[0] += g.dx as f32;
        r[1] += g.dw as f32;
    }
    zero_grads(net);
    net.backward(&cache, &scale_grads)?;
    let norm = match clip {
        Some(c) => clip_grad_norm(net, c),
        None => grad_norm(net),
    };
    if !norm.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite gradient norm {norm} at loss {}",
            loss.total
        )));
    }
    adam.step(net)?;
    Ok(StepStats {
        loss: loss.total,
        classification: loss.classification,
        regression: loss.regression,
        positives,
        sampled: sampled.len(),
        grad_norm: norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub val_map: Option<f64>,
    pub lr: f64,
}

pub struct TrainOutcome {
    /// Weights of the best validation epoch (the last epoch without
    /// validation, the initial weights for zero epochs).
    pub network: Network<f32>,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
    pub best_val_map: Option<f64>,
}

/// Owns the optimizer state and the seeded stream used for shuffling and
/// proposal sampling.
pub struct Trainer {
    pub net: Network<f32>,
    pub adam: AdamState<f32>,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(net: Network<f32>, config: &TrainConfig) -> Self {
        let adam = AdamState::new(AdamConfig {
            lr: config.initial_lr,
            ..AdamConfig::default()
        });
        Self {
            net,
            adam,
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    /// Training segment offsets: every segment inside the train region.
    pub fn train_offsets(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        let (start, end) = dataset
            .split_region(Split::Train)
            .ok_or_else(|| Error::InvalidArgument("training split is empty".into()))?;
        super::region_segments(
            dataset.waveform.len(),
            start,
            end,
            self.net.config.segment_length,
            self.config.overlap,
        )
    }

    pub fn step(&mut self, samples: &[f32], targets: &SegmentTargets) -> Result<StepStats> {
        train_step(
            &mut self.net,
            &mut self.adam,
            samples,
            targets,
            &mut self.rng,
            self.config.clip_grad_norm,
        )
    }

    /// One pass over (a shuffled, optionally capped, list of) training
    /// segments; returns the mean loss.
    pub fn run_epoch(
        &mut self,
        dataset: &Dataset,
        epoch: usize,
        dump_dir: Option<&Path>,
    ) -> Result<f64> {
        self.adam.set_lr(self.config.lr_at(epoch));
        let mut offsets = self.train_offsets(dataset)?;
        offsets.shuffle(&mut self.rng);
        if let Some(cap) = self.config.max_segments_per_epoch {
            offsets.truncate(cap);
        }
        let train_events = dataset.split_events(Split::Train);
        let len = self.net.config.segment_length;
        let mut total = 0.0;
        for (i, &o) in offsets.iter().enumerate() {
            let seg = &dataset.waveform[o..o + len];
            let targets = segment_targets(&train_events, o, len);
            match self.step(seg, &targets) {
                Ok(s) => total += s.loss,
                Err(e) if e.is_numerical() => {
                    let msg = format!("epoch {epoch} step {i} segment offset {o}: {e}");
                    if let Some(dir) = dump_dir {
                        dump_batch(dir, seg, &targets, &msg)?;
                    }
                    return Err(Error::Numerical(msg));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(total / offsets.len().max(1) as f64)
    }
}

fn dump_batch(dir: &Path, segment: &[f32], targets: &SegmentTargets, message: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_waveform(&dir.join("nan_batch.wv1d"), segment)?;
    let report = serde_json::json!({ "error": message, "targets": targets });
    let path = dir.join("nan_batch.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))
}

fn metrics_writer(dir: &Path) -> Result<std::fs::File> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("metrics.csv");
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    writeln!(f, "epoch,loss,val_map,lr").map_err(|e| Error::io(&path, e))?;
    Ok(f)
}

/// Full training run. With `out_dir`, writes `metrics.csv`, and the best
/// checkpoint to `config.checkpoint` or `out_dir/model.ccr`.
pub fn train(
    net: Network<f32>,
    dataset: &Dataset,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(net, config);
    let mut best = trainer.net.clone();
    let mut best_epoch = None;
    let mut best_val = None;
    let mut metrics = Vec::new();
    let mut csv = out_dir.map(metrics_writer).transpose()?;
    let ckpt: Option<PathBuf> = config
        .checkpoint
        .clone()
        .or_else(|| out_dir.map(|d| d.join("model.ccr")));
    let validate = config.validate_every_epoch && !dataset.val.is_empty();
    if let Some(p) = &ckpt {
        save_checkpoint(p, &mut best)?;
    }
    for epoch in 0..config.epochs {
        let loss = trainer.run_epoch(dataset, epoch, out_dir)?;
        let val_map = if validate {
            Some(
                evaluate(
                    &trainer.net,
                    dataset,
                    Split::Val,
                    config.overlap,
                    config.ap_mode,
                )?
                .0
                .map,
            )
        } else {
            None
        };
        let m = EpochMetrics {
            epoch,
            loss,
            val_map,
            lr: config.lr_at(epoch),
        };
        if let Some(f) = &mut csv {
            let v = val_map.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(f, "{},{:.6},{},{:e}", epoch, loss, v, m.lr)
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(out_dir.unwrap_or(Path::new(".")), e))?;
        }
        progress(&m);
        metrics.push(m);
        let improved = match (val_map, best_val) {
            (Some(v), Some(b)) => v > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improved {
            best = trainer.net.clone();
            best_epoch = Some(epoch);
            best_val = val_map;
            if let Some(p) = &ckpt {
                save_checkpoint(p, &mut best)?;
            }
        }
    }
    Ok(TrainOutcome {
        network: best,
        metrics,
        best_epoch,
        best_val_map: best_val,
    })
}
