//! Self-paced motor-imagery (MI) onset detection.
//!
//! A bank of LSTM encoder-decoder predictors is trained only on MI-task EEG.
//! At run time each predictor forecasts the next `ℓ_o` samples of its
//! channel-scale stream; when those samples arrive, the similarity between the
//! forecast and the received signal decides whether the segment is an MI
//! command (high similarity) or rest (low similarity).
//!
//! Module map:
//!
//! - [`signal_io`]: recordings on disk, the synthetic ERD/ERS generator and
//!   continuous test-stream assembly.
//! - [`preprocess`]: small Laplacian, causal Butterworth bandpass, PCA, Morlet
//!   scale decomposition and windowing.
//! - [`quantizer`]: uniform per-stream codebooks and one-hot encoding.
//! - [`predictor`]: the LSTM encoder-decoder, its loss, BPTT training and the
//!   per-stream model bank.
//! - [`detector`]: similarity scoring, threshold tuning, stream detection and
//!   majority-vote error correction.
//! - [`metrics`]: segment-level confusion counts and derived scores.
//! - [`pipeline`]: configuration, model bundles and the end-to-end stages the
//!   CLI drives.

pub mod detector;
pub mod error;
mod fsio;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod preprocess;
pub mod quantizer;
pub mod signal_io;

pub use error::{Error, Result};
pub use signal_io::{Label, Marker, Recording};
