//! Synthetic datasets, file formats and segmentation.

mod formats;
mod segment;
mod synth;

pub use formats::{
    load_dataset, read_detections, read_events, read_waveform, save_dataset, write_detections,
    write_events, write_waveform, Manifest, SplitIndices, WAVEFORM_MAGIC,
};
pub use segment::{normalize_segment, segment_offsets, segment_waveform};
pub use synth::{event_envelope, generate_synthetic, Dataset, Split, SynthConfig};
