//! Synthetic ERD/ERS-like EEG trials.
//!
//! Every channel carries independent `1/f^α` noise synthesized in the
//! frequency domain. MI-task trials add a sinusoidal mu-band burst, with a
//! random phase per trial, to an evenly spread subset of channels. The burst
//! amplitude is chosen so that the expected periodogram power in
//! `[f_burst − 2, f_burst + 2]` Hz grows by the factor `1 + mi_amplitude_gain`
//! relative to noise alone.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Label, Marker, Recording};
use crate::error::{Error, Result};

/// RMS of the generated background noise, in microvolts.
pub const NOISE_RMS_UV: f64 = 10.0;

/// Half-width of the band used to calibrate the burst amplitude.
pub const REFERENCE_HALF_BAND_HZ: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub mi_burst_freq_hz: f64,
    /// Relative excess of reference-band power in MI trials over rest trials.
    pub mi_amplitude_gain: f64,
    /// Spectral slope `α` of the `1/f^α` background.
    pub noise_exponent: f64,
    pub active_channel_fraction: f64,
    pub trial_duration_s: f64,
    pub n_mi_trials: usize,
    pub n_rest_trials: usize,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_channels: 8,
            sample_rate_hz: 100.0,
            mi_burst_freq_hz: 10.0,
            mi_amplitude_gain: 4.0,
            noise_exponent: 1.0,
            active_channel_fraction: 0.5,
            trial_duration_s: 6.0,
            n_mi_trials: 40,
            n_rest_trials: 20,
            rng_seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("synth.{msg}")));
        if self.n_channels == 0 {
            return bad("n_channels must be >= 1".into());
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            ));
        }
        if !(self.mi_burst_freq_hz > 0.0 && self.mi_burst_freq_hz < self.sample_rate_hz / 2.0) {
            return bad(format!(
                "mi_burst_freq_hz must lie in (0, {}), got {}",
                self.sample_rate_hz / 2.0,
                self.mi_burst_freq_hz
            ));
        }
        if !(self.mi_amplitude_gain.is_finite() && self.mi_amplitude_gain >= 0.0) {
            return bad(format!(
                "mi_amplitude_gain must be >= 0, got {}",
                self.mi_amplitude_gain
            ));
        }
        if !self.noise_exponent.is_finite() {
            return bad("noise_exponent must be finite".into());
        }
        if !(self.active_channel_fraction > 0.0 && self.active_channel_fraction <= 1.0) {
            return bad(format!(
                "active_channel_fraction must lie in (0, 1], got {}",
                self.active_channel_fraction
            ));
        }
        if self.trial_samples() < 4 {
            return bad(format!(
                "trial_duration_s = {} gives fewer than 4 samples",
                self.trial_duration_s
            ));
        }
        Ok(())
    }

    pub fn trial_samples(&self) -> usize {
        let n = (self.trial_duration_s * self.sample_rate_hz).round();
        if n.is_finite() && n > 0.0 {
            n as usize
        } else {
            0
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        (0..self.n_channels).map(|i| format!("c{i}")).collect()
    }

    /// Indices of the `⌈fraction · n⌉` burst-carrying channels, spread evenly.
    pub fn active_channels(&self) -> Vec<usize> {
        let n = self.n_channels;
        let k = ((self.active_channel_fraction * n as f64).ceil() as usize).clamp(1, n);
        (0..k).map(|j| j * n / k).collect()
    }

    /// Ring neighborhood (each channel's two ring neighbors) for three or
    /// more channels; empty otherwise.
    pub fn topology(&self) -> BTreeMap<String, Vec<String>> {
        let n = self.n_channels;
        let names = self.channel_names();
        if n < 3 {
            return BTreeMap::new();
        }
        (0..n)
            .map(|i| {
                (
                    names[i].clone(),
                    vec![names[(i + n - 1) % n].clone(), names[(i + 1) % n].clone()],
                )
            })
            .collect()
    }
}

/// Generates `(mi_trials, rest_trials)`; a pure function of `cfg`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Vec<Recording>, Vec<Recording>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let shaper = NoiseShaper::new(cfg);
    let active = cfg.active_channels();
    let n = cfg.trial_samples();
    let omega = 2.0 * PI * cfg.mi_burst_freq_hz / cfg.sample_rate_hz;

    let make_trial = |label: Label, rng: &mut ChaCha8Rng| -> Result<Recording> {
        let mut channels: Vec<Vec<f64>> = (0..cfg.n_channels).map(|_| shaper.sample(rng)).collect();
        if label == Label::MiTask {
            let phase = rng.random::<f64>() * 2.0 * PI;
            for &c in &active {
                for (t, x) in channels[c].iter_mut().enumerate() {
                    *x += shaper.burst_amplitude * (omega * t as f64 + phase).sin();
                }
            }
        }
        let mut samples = super::interleave(&channels)?;
        // Trials are persisted as f32; keep the in-memory values identical.
        for v in &mut samples {
            *v = *v as f32 as f64;
        }
        Recording::new(
            cfg.sample_rate_hz,
            cfg.channel_names(),
            samples,
            cfg.topology(),
            vec![Marker::new(0, n, label)],
        )
    };

    let mi = (0..cfg.n_mi_trials)
        .map(|_| make_trial(Label::MiTask, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let rest = (0..cfg.n_rest_trials)
        .map(|_| make_trial(Label::Rest, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((mi, rest))
}

/// Frequency-domain `1/f^α` noise of a fixed length.
struct NoiseShaper {
    len: usize,
    /// Standard deviation of the real and imaginary parts of each DFT bin.
    bin_std: Vec<f64>,
    burst_amplitude: f64,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl NoiseShaper {
    fn new(cfg: &SynthConfig) -> Self {
        let n = cfg.trial_samples();
        let df = cfg.sample_rate_hz / n as f64;
        // Bins 1..half exclude DC and (for even n) Nyquist.
        let half = (n - 1) / 2;
        let mut shape = vec![0.0; half + 1];
        for (k, s) in shape.iter_mut().enumerate().skip(1) {
            *s = (k as f64 * df).powf(-cfg.noise_exponent / 2.0);
        }
        // Var(x_t) = 4 Σ s_k² / n² for the unnormalized inverse DFT / n.
        let power: f64 = shape.iter().map(|s| s * s).sum();
        let c = NOISE_RMS_UV * n as f64 / (4.0 * power).sqrt();
        let bin_std: Vec<f64> = shape.iter().map(|s| s * c).collect();

        // Expected periodogram |X_k|²/n of noise is 2 s_k² / n; a sinusoid of
        // amplitude A puts A² n / 4 into the band.
        let lo = cfg.mi_burst_freq_hz - REFERENCE_HALF_BAND_HZ;
        let hi = cfg.mi_burst_freq_hz + REFERENCE_HALF_BAND_HZ;
        let band_noise: f64 = bin_std
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(k, _)| {
                let f = *k as f64 * df;
                f >= lo && f <= hi
            })
            .map(|(_, s)| 2.0 * s * s / n as f64)
            .sum();
        let burst_amplitude = (cfg.mi_amplitude_gain * band_noise * 4.0 / n as f64).sqrt();

        let fft = FftPlanner::new().plan_fft_inverse(n);
        Self {
            len: n,
            bin_std,
            burst_amplitude,
            fft,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.len;
        let mut spec = vec![Complex::new(0.0, 0.0); n];
        for k in 1..self.bin_std.len() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex::new(re, im) * self.bin_std[k];
            spec[k] = z;
            spec[n - k] = z.conj();
        }
        self.fft.process(&mut spec);
        spec.iter().map(|z| z.re / n as f64).collect()
    }
}
