//! Uniform per-stream quantization to `v` levels and one-hot encoding.
//!
//! Each (channel, scale) stream gets its own `[lo, hi]` range from the
//! training data. Level `k` covers `[lo + k·w, lo + (k+1)·w)` with
//! `w = (hi − lo) / v`; out-of-range values clamp to the end levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ScaleTensor;

/// Identifies one channel-scale stream; banks order pairs row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairId {
    pub channel: usize,
    pub scale: usize,
}

impl PairId {
    pub fn new(channel: usize, scale: usize) -> Self {
        Self { channel, scale }
    }

    /// All pairs for `channels × scales`, row-major.
    pub fn all(channels: usize, scales: usize) -> Vec<PairId> {
        (0..channels)
            .flat_map(|j| (0..scales).map(move |d| PairId::new(j, d)))
            .collect()
    }
}

impl std::fmt::Display for PairId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}_{}", self.channel, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub levels: usize,
    /// `lo[channel][scale]`
    pub lo: Vec<Vec<f64>>,
    /// `hi[channel][scale]`
    pub hi: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn channels(&self) -> usize {
        self.lo.len()
    }

    pub fn scales(&self) -> usize {
        self.lo.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config(format!("v must be >= 2, got {}", self.levels)));
        }
        let q = self.scales();
        if self.hi.len() != self.lo.len()
            || self.lo.iter().chain(&self.hi).any(|row| row.len() != q)
            || q == 0
        {
            return Err(Error::Shape("codebook lo/hi arrays disagree".into()));
        }
        for (j, (lo, hi)) in self.lo.iter().zip(&self.hi).enumerate() {
            for (d, (l, h)) in lo.iter().zip(hi).enumerate() {
                if !(l.is_finite() && h.is_finite() && l < h) {
                    return Err(Error::ConstantSeries { channel: j, scale: d });
                }
            }
        }
        Ok(())
    }

    fn range(&self, pair: PairId) -> (f64, f64) {
        (
            self.lo[pair.channel][pair.scale],
            self.hi[pair.channel][pair.scale],
        )
    }

    pub fn quantize(&self, x: f64, pair: PairId) -> Result<usize> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("quantizer input for pair {pair}")));
        }
        Ok(self.quantize_unchecked(x, pair))
    }

    #[inline]
    pub(crate) fn quantize_unchecked(&self, x: f64, pair: PairId) -> usize {
        let (lo, hi) = self.range(pair);
        let pos = ((x - lo) / (hi - lo) * self.levels as f64).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.levels - 1)
        }
    }

    pub fn dequantize(&self, level: usize, pair: PairId) -> Result<f64> {
        if level >= self.levels {
            return Err(Error::LevelOutOfRange {
                level,
                levels: self.levels,
            });
        }
        Ok(self.dequantize_unchecked(level, pair))
    }

    #[inline]
    pub(crate) fn dequantize_unchecked(&self, level: usize, pair: PairId) -> f64 {
        let (lo, hi) = self.range(pair);
        lo + (level as f64 + 0.5) * (hi - lo) / self.levels as f64
    }

    /// Quantizes every value of a window stack.
    pub fn quantize_tensor(&self, t: &ScaleTensor) -> Result<LevelTensor> {
        if (t.channels(), t.scales()) != (self.channels(), self.scales()) {
            return Err(Error::Shape(format!(
                "tensor has {}×{} streams, codebook {}×{}",
                t.channels(),
                t.scales(),
                self.channels(),
                self.scales()
            )));
        }
        let q = t.scales();
        let row = t.channels() * q;
        let levels = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let within = i % row;
                self.quantize_unchecked(x, PairId::new(within / q, within % q)) as u16
            })
            .collect();
        Ok(LevelTensor {
            n_windows: t.n_windows(),
            window_len: t.window_len(),
            channels: t.channels(),
            scales: q,
            levels: self.levels,
            data: levels,
        })
    }
}

/// Fits per-stream `[min, max]` ranges over all values of the given tensors.
pub fn fit_codebook(train: &[&ScaleTensor], levels: usize) -> Result<Codebook> {
    if levels < 2 || levels > u16::MAX as usize {
        return Err(Error::Config(format!("v must lie in [2, 65535], got {levels}")));
    }
    let first = train
        .iter()
        .find(|t| t.n_windows() > 0)
        .ok_or_else(|| Error::InsufficientData("empty training tensor".into()))?;
    let (m, q) = (first.channels(), first.scales());
    let mut lo = vec![vec![f64::INFINITY; q]; m];
    let mut hi = vec![vec![f64::NEG_INFINITY; q]; m];
    for t in train {
        if (t.channels(), t.scales()) != (m, q) {
            return Err(Error::Shape("training tensors differ in stream layout".into()));
        }
        for (i, &x) in t.data().iter().enumerate() {
            let within = i % (m * q);
            let (j, d) = (within / q, within % q);
            lo[j][d] = lo[j][d].min(x);
            hi[j][d] = hi[j][d].max(x);
        }
    }
    let cb = Codebook { levels, lo, hi };
    cb.validate()?;
    Ok(cb)
}

/// Unit basis vector of length `levels` with a 1 at `level`.
pub fn one_hot(level: usize, levels: usize) -> Result<Vec<f64>> {
    if level >= levels {
        return Err(Error::LevelOutOfRange { level, levels });
    }
    let mut v = vec![0.0; levels];
    v[level] = 1.0;
    Ok(v)
}

/// Quantized windows `[N × len × m′ × q]`, the compact form of the one-hot
/// tensor `[N × len × m′ × q × v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTensor {
    n_windows: usize,
    window_len: usize,
    channels: usize,
    scales: usize,
    levels: usize,
    data: Vec<u16>,
}

impl LevelTensor {
    pub fn from_levels(
        n_windows: usize,
        window_len: usize,
        channels: usize,
        scales: usize,
        levels: usize,
        data: Vec<u16>,
    ) -> Result<Self> {
        if data.len() != n_windows * window_len * channels * scales {
            return Err(Error::Shape(format!(
                "{} levels do not fill {n_windows}×{window_len}×{channels}×{scales}",
                data.len()
            )));
        }
        if let Some(&l) = data.iter().find(|&&l| l as usize >= levels) {
            return Err(Error::LevelOutOfRange {
                level: l as usize,
                levels,
            });
        }
        Ok(Self {
            n_windows,
            window_len,
            channels,
            scales,
            levels,
            data,
        })
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize, pair: PairId) -> usize {
        self.data[((k * self.window_len + t) * self.channels + pair.channel) * self.scales + pair.scale]
            as usize
    }

    /// Keeps the windows whose indices are listed, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let per = self.window_len * self.channels * self.scales;
        Self {
            n_windows: indices.len(),
            data: indices
                .iter()
                .flat_map(|&k| self.data[k * per..(k + 1) * per].iter().copied())
                .collect(),
            ..*self
        }
    }

    /// One-hot vector of element `(k, t, pair)`.
    pub fn one_hot(&self, k: usize, t: usize, pair: PairId) -> Vec<f64> {
        one_hot(self.get(k, t, pair), self.levels).expect("stored levels are in range")
    }

    /// Level sequences of one stream: `[N][len]`.
    pub fn pair_sequences(&self, pair: PairId) -> Vec<Vec<usize>> {
        (0..self.n_windows)
            .map(|k| (0..self.window_len).map(|t| self.get(k, t, pair)).collect())
            .collect()
    }
}
