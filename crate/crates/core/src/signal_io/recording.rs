use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

/// Ground-truth class of a stretch of signal. MI-task is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    MiTask,
    Rest,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::MiTask => "mi_task",
            Label::Rest => "rest",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::MiTask
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mi_task" => Ok(Label::MiTask),
            "rest" => Ok(Label::Rest),
            other => Err(Error::InvalidRecording(format!("unknown label {other:?}"))),
        }
    }
}

/// A labelled interval `[onset_sample, onset_sample + duration_samples)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub onset_sample: usize,
    pub duration_samples: usize,
    pub label: Label,
}

impl Marker {
    pub fn new(onset_sample: usize, duration_samples: usize, label: Label) -> Self {
        Self {
            onset_sample,
            duration_samples,
            label,
        }
    }

    pub fn end(&self) -> usize {
        self.onset_sample + self.duration_samples
    }
}

/// Multichannel EEG with its electrode neighborhood and ground-truth markers.
///
/// Samples are stored time-major: `samples[t * n_channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    sample_rate_hz: f64,
    channels: Vec<String>,
    samples: Vec<f64>,
    topology: BTreeMap<String, Vec<String>>,
    markers: Vec<Marker>,
}

impl Recording {
    pub fn new(
        sample_rate_hz: f64,
        channels: Vec<String>,
        samples: Vec<f64>,
        topology: BTreeMap<String, Vec<String>>,
        markers: Vec<Marker>,
    ) -> Result<Self> {
        let rec = Self {
            sample_rate_hz,
            channels,
            samples,
            topology,
            markers,
        };
        rec.validate()?;
        Ok(rec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidRecording(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        let n_ch = self.channels.len();
        if n_ch == 0 {
            return Err(Error::InvalidRecording("no channels".into()));
        }
        let mut seen = HashSet::new();
        for ch in &self.channels {
            if !seen.insert(ch.as_str()) {
                return Err(Error::InvalidRecording(format!("duplicate channel {ch:?}")));
            }
        }
        if self.samples.is_empty() || !self.samples.len().is_multiple_of(n_ch) {
            return Err(Error::InvalidRecording(format!(
                "{} values do not form whole rows of {n_ch} channels",
                self.samples.len()
            )));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "sample {}, channel {}",
                i / n_ch,
                self.channels[i % n_ch]
            )));
        }
        for (ch, neighbors) in &self.topology {
            if !seen.contains(ch.as_str()) {
                return Err(Error::UnknownNeighbor {
                    channel: ch.clone(),
                    neighbor: ch.clone(),
                });
            }
            for nb in neighbors {
                if !seen.contains(nb.as_str()) {
                    return Err(Error::UnknownNeighbor {
                        channel: ch.clone(),
                        neighbor: nb.clone(),
                    });
                }
            }
        }
        let n = self.n_samples();
        let mut prev_end = 0;
        for (i, m) in self.markers.iter().enumerate() {
            if m.duration_samples == 0 {
                return Err(Error::InvalidRecording(format!("marker {i} has zero duration")));
            }
            if m.end() > n {
                return Err(Error::InvalidRecording(format!(
                    "marker {i} ends at {} past {n} samples",
                    m.end()
                )));
            }
            if i > 0 && m.onset_sample < prev_end {
                return Err(Error::InvalidRecording(format!(
                    "marker {i} overlaps or precedes its predecessor"
                )));
            }
            prev_end = m.end();
        }
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len() / self.channels.len()
    }

    /// Time-major sample buffer.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let c = self.n_channels();
        &self.samples[t * c..(t + 1) * c]
    }

    pub fn value(&self, t: usize, channel: usize) -> f64 {
        self.samples[t * self.n_channels() + channel]
    }

    pub fn topology(&self) -> &BTreeMap<String, Vec<String>> {
        &self.topology
    }

    pub fn neighbors(&self, channel: &str) -> &[String] {
        self.topology.get(channel).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// One `Vec` per channel.
    pub fn to_channel_major(&self) -> Vec<Vec<f64>> {
        let c = self.n_channels();
        (0..c)
            .map(|ch| self.samples.iter().skip(ch).step_by(c).copied().collect())
            .collect()
    }

    /// Same channels, topology and markers with new (time-major) samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(
            self.sample_rate_hz,
            self.channels.clone(),
            samples,
            self.topology.clone(),
            self.markers.clone(),
        )
    }

    /// Same channels, topology and markers, from per-channel series.
    pub fn with_channel_major(&self, data: &[Vec<f64>]) -> Result<Self> {
        self.with_samples(interleave(data)?)
    }

    pub fn with_markers(mut self, markers: Vec<Marker>) -> Result<Self> {
        self.markers = markers;
        self.validate()?;
        Ok(self)
    }
}

/// Interleaves equal-length channel series into a time-major buffer.
pub(crate) fn interleave(data: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = data.first().map_or(0, Vec::len);
    if data.iter().any(|ch| ch.len() != n) {
        return Err(Error::Shape("channel series differ in length".into()));
    }
    let mut out = Vec::with_capacity(n * data.len());
    for t in 0..n {
        out.extend(data.iter().map(|ch| ch[t]));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    sample_rate_hz: f64,
    n_channels: usize,
    n_samples: usize,
    channels: Vec<String>,
    topology: BTreeMap<String, Vec<String>>,
    markers: Vec<Marker>,
}

/// The `(metadata, payload)` file pair for a recording base path.
pub fn recording_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("f32"))
}

/// Reads `<path>.json` and `<path>.f32`.
pub fn load_recording(path: &Path) -> Result<Recording> {
    let (meta_path, raw_path) = recording_paths(path);
    let header: Header = serde_json::from_str(&fsio::read_string(&meta_path)?)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if header.channels.len() != header.n_channels {
        return Err(Error::format(
            &meta_path,
            format!(
                "n_channels = {} but {} channel names listed",
                header.n_channels,
                header.channels.len()
            ),
        ));
    }
    let samples = fsio::decode_f32(&raw_path, &fsio::read_bytes(&raw_path)?)?;
    let expected = header.n_channels * header.n_samples;
    if samples.len() != expected {
        return Err(Error::SampleCountMismatch {
            expected,
            found: samples.len(),
        });
    }
    Recording::new(
        header.sample_rate_hz,
        header.channels,
        samples,
        header.topology,
        header.markers,
    )
}

/// Writes `<path>.json` and `<path>.f32`. Values are stored as f32.
pub fn save_recording(rec: &Recording, path: &Path) -> Result<()> {
    let (meta_path, raw_path) = recording_paths(path);
    let header = Header {
        sample_rate_hz: rec.sample_rate_hz,
        n_channels: rec.n_channels(),
        n_samples: rec.n_samples(),
        channels: rec.channels.clone(),
        topology: rec.topology.clone(),
        markers: rec.markers.clone(),
    };
    fsio::write_atomic(&raw_path, &fsio::encode_f32(rec.samples.iter().copied()))?;
    fsio::write_atomic(&meta_path, &fsio::to_json_bytes(&header))
}
