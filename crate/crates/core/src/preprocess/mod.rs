//! Recording → `[time × m′ × q]` series: small Laplacian, causal bandpass,
//! PCA projection and Morlet scale decomposition, then windowing.
//!
//! Every stage preserves the sample count.

mod bandpass;
mod cwt;
mod pca;
mod spatial;
mod windows;

pub use bandpass::{bandpass_filter, BandpassFilter, BandpassSpec, Biquad};
pub use cwt::{cwt_decompose, CwtSpec};
pub use pca::{pca_fit, pca_project, PcaModel};
pub use spatial::laplacian_filter;
pub use windows::{make_windows, ScaleSeries, ScaleTensor, WindowOrigin};

use crate::error::Result;
use crate::signal_io::Recording;

/// Laplacian followed by the causal bandpass.
pub fn spatial_and_band(rec: &Recording, band: &BandpassSpec) -> Result<Recording> {
    bandpass_filter(&laplacian_filter(rec)?, band)
}

/// Fits PCA on the filtered MI trials.
pub fn fit_pca(mi_trials: &[Recording], band: &BandpassSpec, retention: f64) -> Result<PcaModel> {
    let filtered = mi_trials
        .iter()
        .map(|r| spatial_and_band(r, band))
        .collect::<Result<Vec<_>>>()?;
    pca_fit(&filtered, retention)
}

/// Full chain for one recording.
pub fn preprocess_recording(
    rec: &Recording,
    band: &BandpassSpec,
    pca: &PcaModel,
    cwt: &CwtSpec,
) -> Result<ScaleSeries> {
    cwt_decompose(&pca_project(&spatial_and_band(rec, band)?, pca)?, cwt)
}
