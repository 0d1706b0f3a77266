//! Training loop, split evaluation and the detector abstraction shared by
//! the network, the template-matching baseline and test oracles.

mod ablation;
mod eval;
mod train;

pub use ablation::{mean_map, run_ablation, AblationRow, Variant};
pub use eval::{detect_region, evaluate, region_segments, Detector, OracleDetector};
pub use train::{
    segment_targets, train, train_step, EpochMetrics, SegmentTargets, StepStats, TrainOutcome,
    Trainer,
};
