//! Recordings on disk, synthetic trials and continuous test streams.
//!
//! A recording is stored as two files sharing a base name: `<name>.json`
//! holds the metadata and `<name>.f32` the little-endian f32 samples in
//! time-major order.

mod compose;
mod recording;
mod synth;

pub use compose::{compose_continuous, interval_labels, segment_truth, SegmentTruth};
pub(crate) use recording::interleave;
pub use recording::{load_recording, recording_paths, save_recording, Label, Marker, Recording};
pub use synth::{synth_generate, SynthConfig, NOISE_RMS_UV, REFERENCE_HALF_BAND_HZ};
