//! Contextual and multi-scale ablations over several training seeds.

use serde::Serialize;

use super::{evaluate, train};
use crate::config::{ModelConfig, TrainConfig};
use crate::dataio::{Dataset, Split};
use crate::error::Result;
use crate::model::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Variant {
    pub context: bool,
    /// `None` uses every detection scale.
    pub single_scale: Option<usize>,
}

impl Variant {
    pub const FULL: Variant = Variant {
        context: true,
        single_scale: None,
    };

    pub fn new(context: bool, single_scale: Option<usize>) -> Self {
        Self {
            context,
            single_scale,
        }
    }

    /// The contextual and multi-scale ablation grid.
    pub fn grid(single_scale: usize) -> Vec<Variant> {
        vec![
            Variant::new(true, None),
            Variant::new(false, None),
            Variant::new(true, Some(single_scale)),
            Variant::new(false, Some(single_scale)),
        ]
    }

    pub fn name(&self) -> String {
        let c = if self.context { "context" } else { "nocontext" };
        match self.single_scale {
            None => format!("{c}-multiscale"),
            Some(s) => format!("{c}-scale{s}"),
        }
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        cfg.context.enabled = self.context;
        cfg.scales = self.single_scale.map(|s| vec![s]);
        cfg
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub test_map: f64,
    pub test_ap50: f64,
    pub best_epoch: Option<usize>,
}

/// Trains every variant once per seed (the seed drives both initialisation
/// and training) and scores the best-validation weights on the test split.
pub fn run_ablation(
    dataset: &Dataset,
    base: &ModelConfig,
    train_config: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    progress: &mut dyn FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for v in variants {
            let mut cfg = v.apply(base);
            cfg.init_seed = seed;
            let tc = TrainConfig {
                seed,
                checkpoint: None,
                ..train_config.clone()
            };
            let out = train(Network::new(&cfg)?, dataset, &tc, None, &mut |_| {})?;
            let (report, _) = evaluate(&out.network, dataset, Split::Test, tc.overlap, tc.ap_mode)?;
            let row = AblationRow {
                variant: v.name(),
                seed,
                test_map: report.map,
                test_ap50: report.ap50(),
                best_epoch: out.best_epoch,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean test mAP of one variant over the rows.
pub fn mean_map(rows: &[AblationRow], variant: &Variant) -> Option<f64> {
    let name = variant.name();
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.variant == name)
        .map(|r| r.test_map)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
