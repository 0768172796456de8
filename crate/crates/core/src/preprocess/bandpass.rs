//! Causal Butterworth bandpass as a cascade of second-order sections.
//!
//! The analog lowpass prototype of order `N` has poles
//! `exp(iπ(2k + N + 1) / 2N)`. The lowpass-to-bandpass substitution
//! `s → (s² + ω₀²) / (B s)` doubles every pole, and the bilinear transform
//! (with `tan` prewarping of both band edges) maps them to the z-plane. Each
//! conjugate pole pair becomes one biquad with zeros at `z = ±1`, scaled to
//! unit gain at the band center, so `order = N` yields `N` sections and a
//! filter of total order `2N`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::Recording;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        Self {
            low_hz: 6.0,
            high_hz: 13.0,
            order: 4,
        }
    }
}

impl BandpassSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.low_hz > 0.0) {
            return Err(Error::Config(format!(
                "bandpass.low_hz must be > 0, got {}",
                self.low_hz
            )));
        }
        if !(self.low_hz < self.high_hz) {
            return Err(Error::Config("bandpass.low_hz must be < high_hz".into()));
        }
        if !(self.high_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "bandpass.high_hz must be < {} (Nyquist)",
                sample_rate_hz / 2.0
            )));
        }
        if self.order == 0 {
            return Err(Error::Config("bandpass.order must be >= 1".into()));
        }
        Ok(())
    }

    /// Prewarped analog edges `(ω₁, ω₂)` for the bilinear map `s = (z−1)/(z+1)`.
    fn warped_edges(&self, sample_rate_hz: f64) -> (f64, f64) {
        (
            (PI * self.low_hz / sample_rate_hz).tan(),
            (PI * self.high_hz / sample_rate_hz).tan(),
        )
    }

    /// Ideal magnitude response `1 / sqrt(1 + Ω^{2N})` at `freq_hz`.
    pub fn design_magnitude(&self, sample_rate_hz: f64, freq_hz: f64) -> f64 {
        let (w1, w2) = self.warped_edges(sample_rate_hz);
        let w = (PI * freq_hz / sample_rate_hz).tan();
        let omega = (w * w - w1 * w2) / (w * (w2 - w1));
        1.0 / (1.0 + omega.abs().powi(2 * self.order as i32)).sqrt()
    }

    /// Digital center frequency, where the designed gain is exactly 1.
    pub fn center_hz(&self, sample_rate_hz: f64) -> f64 {
        let (w1, w2) = self.warped_edges(sample_rate_hz);
        (w1 * w2).sqrt().atan() * sample_rate_hz / PI
    }
}

/// One second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + zi * (self.b[1] + zi * self.b[2]);
        let den = 1.0 + zi * (self.a[0] + zi * self.a[1]);
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandpassFilter {
    pub sections: Vec<Biquad>,
}

impl BandpassFilter {
    pub fn design(spec: &BandpassSpec, sample_rate_hz: f64) -> Result<Self> {
        spec.validate(sample_rate_hz)?;
        let n = spec.order;
        let (w1, w2) = spec.warped_edges(sample_rate_hz);
        let w0sq = w1 * w2;
        let bw = w2 - w1;
        let center = spec.center_hz(sample_rate_hz);
        let zc = Complex64::from_polar(1.0, 2.0 * PI * center / sample_rate_hz);

        let mut sections = Vec::with_capacity(n);
        for k in 0..n {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let p = Complex64::from_polar(1.0, theta);
            // s² − pB s + ω₀² = 0
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0sq).sqrt();
            for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
                // Conjugate partners come from the conjugate prototype pole;
                // keep only the upper half-plane representative.
                if s.im <= 0.0 {
                    continue;
                }
                let z = (1.0 + s) / (1.0 - s);
                if z.norm() >= 1.0 {
                    return Err(Error::UnstableFilter(z.norm()));
                }
                let mut sec = Biquad {
                    b: [1.0, 0.0, -1.0],
                    a: [-2.0 * z.re, z.norm_sqr()],
                };
                let g = sec.response(zc).norm();
                sec.b = [1.0 / g, 0.0, -1.0 / g];
                sections.push(sec);
            }
        }
        if sections.len() != n {
            return Err(Error::Config(format!(
                "bandpass design produced {} sections for order {n}",
                sections.len()
            )));
        }
        Ok(Self { sections })
    }

    /// Frequency response of the emitted coefficients at `freq_hz`.
    pub fn response(&self, sample_rate_hz: f64, freq_hz: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq_hz / sample_rate_hz);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    /// Largest pole radius across all sections.
    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| s.a[1].abs().sqrt())
            .fold(0.0, f64::max)
    }

    /// Single forward pass, zero initial state (transposed direct form II).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * out + z2;
                z2 = s.b[2] * input - s.a[1] * out;
                *v = out;
            }
        }
        y
    }
}

/// Filters every channel of `rec` causally.
pub fn bandpass_filter(rec: &Recording, spec: &BandpassSpec) -> Result<Recording> {
    let filter = BandpassFilter::design(spec, rec.sample_rate_hz())?;
    let filtered: Vec<Vec<f64>> = rec.to_channel_major().iter().map(|ch| filter.apply(ch)).collect();
    rec.with_channel_major(&filtered)
}
