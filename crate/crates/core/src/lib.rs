//! Cascaded contextual region-based event detection for 1D time series.
//!
//! The crate is organized along the detection pipeline:
//!
//! * [`nnengine`]: tensors, differentiable layers, Adam, gradient checking
//! * [`backbone`]: the cascaded densely connected feature extractor
//! * [`dethead`]: anchors, contextual block, sibling heads, losses, decoding
//! * [`geomeval`]: interval geometry, NMS and average precision
//! * [`tmatch`]: the template-matching baseline
//! * [`dataio`]: synthetic data, file formats, segmentation
//! * [`trainer`]: training loop, evaluation, checkpoints

pub mod backbone;
pub mod config;
pub mod dataio;
pub mod dethead;
pub mod error;
pub mod geomeval;
pub mod gradsuite;
pub mod model;
pub mod nnengine;
pub mod tmatch;
pub mod trainer;

pub use config::{ModelConfig, Preset, RunConfig};
pub use error::{Error, Result};
pub use geomeval::{Detection, EvalReport, Interval};
pub use model::Network;
pub use nnengine::Tensor;
