use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{TuningMode, TuningSpec};
use crate::error::{Error, Result};
use crate::fsio;
use crate::predictor::TrainConfig;
use crate::preprocess::{BandpassSpec, CwtSpec};
use crate::signal_io::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub n_s: usize,
    pub tuning_mode: TuningMode,
    pub percentile_alpha: f64,
    pub folds: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let t = TuningSpec::default();
        Self {
            n_s: 2,
            tuning_mode: t.mode,
            percentile_alpha: t.alpha,
            folds: t.folds,
        }
    }
}

impl DetectorSection {
    pub fn tuning(&self) -> TuningSpec {
        TuningSpec {
            mode: self.tuning_mode,
            alpha: self.percentile_alpha,
            folds: self.folds,
        }
    }
}

/// Synthetic corpus settings; the sample rate comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_channels: usize,
    pub mi_burst_freq_hz: f64,
    pub mi_amplitude_gain: f64,
    pub noise_exponent: f64,
    pub active_channel_fraction: f64,
    pub trial_duration_s: f64,
    pub n_mi_trials: usize,
    pub n_rest_trials: usize,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            n_channels: s.n_channels,
            mi_burst_freq_hz: s.mi_burst_freq_hz,
            mi_amplitude_gain: s.mi_amplitude_gain,
            noise_exponent: s.noise_exponent,
            active_channel_fraction: s.active_channel_fraction,
            trial_duration_s: s.trial_duration_s,
            n_mi_trials: s.n_mi_trials,
            n_rest_trials: s.n_rest_trials,
            seed: s.rng_seed,
        }
    }
}

/// How trials are divided and the test stream is assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Fraction of MI trials used for training; the rest go into the stream.
    pub train_fraction: f64,
    pub min_rest_s: f64,
    pub max_rest_s: f64,
    /// A segment is MI-task when more than this fraction of it is.
    pub overlap_rule: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            min_rest_s: 3.0,
            max_rest_s: 6.0,
            overlap_rule: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub hidden_sizes: Vec<usize>,
    pub output_lengths_s: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![10, 30, 50, 90],
            output_lengths_s: vec![0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub sample_rate_hz: f64,
    pub pca_retention: f64,
    pub q: usize,
    pub v: usize,
    pub input_len_s: f64,
    pub output_len_s: f64,
    /// Detection hop; defaults to `output_len_s`.
    pub hop_s: Option<f64>,
    /// Hop between training windows; defaults to the detection hop.
    pub train_hop_s: Option<f64>,
    pub bandpass: BandpassSpec,
    pub train: TrainConfig,
    pub detector: DetectorSection,
    pub synth: SynthSection,
    pub split: SplitSection,
    pub sweep: SweepSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 100.0,
            pca_retention: 0.70,
            q: 6,
            v: 64,
            input_len_s: 0.5,
            output_len_s: 0.5,
            hop_s: None,
            train_hop_s: None,
            bandpass: BandpassSpec::default(),
            train: TrainConfig::default(),
            detector: DetectorSection::default(),
            synth: SynthSection::default(),
            split: SplitSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Window lengths in samples, derived once from the seconds in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLengths {
    pub input_len: usize,
    pub output_len: usize,
    pub hop: usize,
    pub train_hop: usize,
}

/// `seconds · rate` rounded to the nearest sample; more than 1% rounding
/// error is rejected.
pub fn seconds_to_samples(field: &str, seconds: f64, rate: f64) -> Result<usize> {
    let exact = seconds * rate;
    let n = exact.round();
    if !(exact.is_finite() && n >= 1.0) {
        return Err(Error::Config(format!(
            "{field} = {seconds} s is less than one sample at {rate} Hz"
        )));
    }
    if (n - exact).abs() > 0.01 * exact {
        return Err(Error::Config(format!(
            "{field} = {seconds} s is {exact} samples at {rate} Hz; rounding to {n} exceeds 1%"
        )));
    }
    Ok(n as usize)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config("sample_rate_hz must be positive".into()));
        }
        if !(self.pca_retention > 0.0 && self.pca_retention <= 1.0) {
            return Err(Error::Config("pca_retention must lie in (0, 1]".into()));
        }
        if self.q == 0 {
            return Err(Error::Config("q must be >= 1".into()));
        }
        if self.v < 2 || self.v > u16::MAX as usize {
            return Err(Error::Config("v must lie in [2, 65535]".into()));
        }
        self.bandpass.validate(self.sample_rate_hz)?;
        self.train.validate()?;
        self.detector.tuning().validate()?;
        if !self.detector.n_s.is_multiple_of(2) {
            return Err(Error::Config("detector.n_s must be even".into()));
        }
        self.synth_config().validate()?;
        let s = &self.split;
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(Error::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        if !(s.min_rest_s >= 0.0 && s.max_rest_s >= s.min_rest_s && s.max_rest_s.is_finite()) {
            return Err(Error::Config("split.min_rest_s/max_rest_s are invalid".into()));
        }
        if !(0.0..1.0).contains(&s.overlap_rule) {
            return Err(Error::Config("split.overlap_rule must lie in [0, 1)".into()));
        }
        if self.sweep.hidden_sizes.contains(&0) {
            return Err(Error::Config("sweep.hidden_sizes must be >= 1".into()));
        }
        for &lo in &self.sweep.output_lengths_s {
            seconds_to_samples("sweep.output_lengths_s", lo, self.sample_rate_hz)?;
        }
        self.lengths()?;
        Ok(())
    }

    pub fn lengths(&self) -> Result<SampleLengths> {
        let fs = self.sample_rate_hz;
        let output_len = seconds_to_samples("output_len_s", self.output_len_s, fs)?;
        let hop = match self.hop_s {
            Some(h) => seconds_to_samples("hop_s", h, fs)?,
            None => output_len,
        };
        Ok(SampleLengths {
            input_len: seconds_to_samples("input_len_s", self.input_len_s, fs)?,
            output_len,
            hop,
            train_hop: match self.train_hop_s {
                Some(h) => seconds_to_samples("train_hop_s", h, fs)?,
                None => hop,
            },
        })
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n_channels: s.n_channels,
            sample_rate_hz: self.sample_rate_hz,
            mi_burst_freq_hz: s.mi_burst_freq_hz,
            mi_amplitude_gain: s.mi_amplitude_gain,
            noise_exponent: s.noise_exponent,
            active_channel_fraction: s.active_channel_fraction,
            trial_duration_s: s.trial_duration_s,
            n_mi_trials: s.n_mi_trials,
            n_rest_trials: s.n_rest_trials,
            rng_seed: s.seed,
        }
    }

    /// Scale center frequencies spread geometrically over the passband.
    pub fn cwt_spec(&self) -> Result<CwtSpec> {
        CwtSpec::geometric(self.q, self.bandpass.low_hz, self.bandpass.high_hz)
    }

    /// Applies `--seed`: both the synthetic corpus and training follow it.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.train.seed = s;
            self.synth.seed = s;
        }
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Reads and validates a TOML config file.
pub fn parse_config(path: &Path) -> Result<PipelineConfig> {
    let text = fsio::read_string(path)?;
    PipelineConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
