//! Morlet scale-subspace decomposition.
//!
//! For scale `d` with center frequency `f_d`, the Morlet wavelet
//! `ψ(t) = exp(iω₀t/s) · exp(−t²/2s²)` uses `s = ω₀ / (2π f_d)`. The series for
//! that scale is `Re{(x ⋆ ψ̄_d)(t)}`, the real part of the CWT coefficient row,
//! with the wavelet normalized to unit L1 norm. Because `Re{ψ}` is even, this
//! is a real, zero-phase FIR filter `g[n]·cos(ω₀ n / σ)` with a Gaussian
//! envelope `g` truncated at four standard deviations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ScaleSeries;
use crate::error::{Error, Result};
use crate::signal_io::Recording;

/// Gaussian envelope truncation, in standard deviations.
const TRUNCATE_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwtSpec {
    pub omega0: f64,
    /// Increasing center frequencies, one per scale subspace.
    pub scale_center_freqs_hz: Vec<f64>,
}

impl CwtSpec {
    pub const MORLET_OMEGA0: f64 = 6.0;

    /// `q` center frequencies geometrically spaced over `[low_hz, high_hz]`.
    pub fn geometric(q: usize, low_hz: f64, high_hz: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::Config("q must be >= 1".into()));
        }
        if !(low_hz > 0.0 && low_hz < high_hz) {
            return Err(Error::Config(format!(
                "scale band [{low_hz}, {high_hz}] is invalid"
            )));
        }
        let freqs = if q == 1 {
            vec![(low_hz * high_hz).sqrt()]
        } else {
            let ratio = (high_hz / low_hz).ln();
            (0..q)
                .map(|d| low_hz * (ratio * d as f64 / (q - 1) as f64).exp())
                .collect()
        };
        Ok(Self {
            omega0: Self::MORLET_OMEGA0,
            scale_center_freqs_hz: freqs,
        })
    }

    pub fn q(&self) -> usize {
        self.scale_center_freqs_hz.len()
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let f = &self.scale_center_freqs_hz;
        if f.is_empty() {
            return Err(Error::Config("CWT spec has no scales".into()));
        }
        if f.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "scale center frequencies must be strictly increasing".into(),
            ));
        }
        if !(f[0] > 0.0 && f[f.len() - 1] < sample_rate_hz / 2.0) {
            return Err(Error::Config(
                "scale center frequencies must lie in (0, Nyquist)".into(),
            ));
        }
        if !(self.omega0 > 0.0) {
            return Err(Error::Config("omega0 must be positive".into()));
        }
        Ok(())
    }

    /// Real part of the L1-normalized, conjugated Morlet kernel for scale `d`,
    /// indexed `-h..=h`.
    pub fn kernel(&self, d: usize, sample_rate_hz: f64) -> Vec<f64> {
        let scale_s = self.omega0 / (2.0 * PI * self.scale_center_freqs_hz[d]);
        let sigma = scale_s * sample_rate_hz;
        let h = (TRUNCATE_SIGMAS * sigma).ceil() as i64;
        let envelope: Vec<f64> = (-h..=h)
            .map(|n| (-(n * n) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let l1: f64 = envelope.iter().sum();
        (-h..=h)
            .zip(envelope)
            .map(|(n, g)| g / l1 * (self.omega0 * n as f64 / sigma).cos())
            .collect()
    }
}

/// Decomposes every channel of `rec` into `q` scale series of equal length.
pub fn cwt_decompose(rec: &Recording, spec: &CwtSpec) -> Result<ScaleSeries> {
    spec.validate(rec.sample_rate_hz())?;
    let q = spec.q();
    let c = rec.n_channels();
    let n = rec.n_samples();
    let mut out = ScaleSeries::zeros(n, c, q);
    let channels = rec.to_channel_major();
    for d in 0..q {
        let kernel = spec.kernel(d, rec.sample_rate_hz());
        let h = (kernel.len() / 2) as isize;
        for (j, x) in channels.iter().enumerate() {
            for t in 0..n {
                // Zero padding on both ends.
                let lo = (t as isize - h).max(0) as usize;
                let hi = ((t as isize + h) as usize).min(n - 1);
                let k0 = (lo as isize - (t as isize - h)) as usize;
                let acc: f64 = x[lo..=hi].iter().zip(&kernel[k0..]).map(|(a, b)| a * b).sum();
                out.set(t, j, d, acc);
            }
        }
    }
    Ok(out)
}
