use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `[time × channel × scale]` series, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSeries {
    time: usize,
    channels: usize,
    scales: usize,
    data: Vec<f64>,
}

impl ScaleSeries {
    pub fn zeros(time: usize, channels: usize, scales: usize) -> Self {
        Self {
            time,
            channels,
            scales,
            data: vec![0.0; time * channels * scales],
        }
    }

    pub fn from_vec(time: usize, channels: usize, scales: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != time * channels * scales {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {time}×{channels}×{scales} series",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series element {i}")));
        }
        Ok(Self {
            time,
            channels,
            scales,
            data,
        })
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, t: usize, j: usize, d: usize) -> usize {
        (t * self.channels + j) * self.scales + d
    }

    #[inline]
    pub fn get(&self, t: usize, j: usize, d: usize) -> f64 {
        self.data[self.idx(t, j, d)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, j: usize, d: usize, v: f64) {
        let i = self.idx(t, j, d);
        self.data[i] = v;
    }

    /// Samples `[start, start + len)` of one channel-scale stream.
    pub fn stream(&self, j: usize, d: usize, start: usize, len: usize) -> Vec<f64> {
        (start..start + len).map(|t| self.get(t, j, d)).collect()
    }
}

/// Where a window was cut from: source series index and first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub source: usize,
    pub start: usize,
}

/// A stack of windows, `[n_windows × window_len × channels × scales]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleTensor {
    window_len: usize,
    channels: usize,
    scales: usize,
    data: Vec<f64>,
    origins: Vec<WindowOrigin>,
}

impl ScaleTensor {
    pub fn new(
        window_len: usize,
        channels: usize,
        scales: usize,
        data: Vec<f64>,
        origins: Vec<WindowOrigin>,
    ) -> Result<Self> {
        let per = window_len * channels * scales;
        if per == 0 || data.len() != per * origins.len() {
            return Err(Error::Shape(format!(
                "{} values do not form {} windows of {window_len}×{channels}×{scales}",
                data.len(),
                origins.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {i}")));
        }
        Ok(Self {
            window_len,
            channels,
            scales,
            data,
            origins,
        })
    }

    pub fn n_windows(&self) -> usize {
        self.origins.len()
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn origins(&self) -> &[WindowOrigin] {
        &self.origins
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize, j: usize, d: usize) -> f64 {
        self.data[((k * self.window_len + t) * self.channels + j) * self.scales + d]
    }

    /// Appends the windows of `other`, which must share the window shape.
    pub fn extend(&mut self, other: &ScaleTensor) -> Result<()> {
        if (other.window_len, other.channels, other.scales) != (self.window_len, self.channels, self.scales) {
            return Err(Error::Shape("cannot stack windows of different shapes".into()));
        }
        self.data.extend_from_slice(&other.data);
        self.origins.extend_from_slice(&other.origins);
        Ok(())
    }

    /// Keeps the windows whose indices are listed, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let per = self.window_len * self.channels * self.scales;
        let mut data = Vec::with_capacity(per * indices.len());
        let mut origins = Vec::with_capacity(indices.len());
        for &k in indices {
            data.extend_from_slice(&self.data[k * per..(k + 1) * per]);
            origins.push(self.origins[k]);
        }
        Self::new(self.window_len, self.channels, self.scales, data, origins)
    }
}

/// Cuts `(inputs, targets)` window pairs from `series`.
///
/// Window `k` has input samples `[k·hop, k·hop + ℓ_i)` and target samples
/// `[k·hop + ℓ_i, k·hop + ℓ_i + ℓ_o)`; `source` tags the origins.
pub fn make_windows(
    series: &ScaleSeries,
    input_len: usize,
    output_len: usize,
    hop: usize,
    source: usize,
) -> Result<(ScaleTensor, ScaleTensor)> {
    if input_len == 0 || output_len == 0 || hop == 0 {
        return Err(Error::Config("window lengths and hop must be >= 1".into()));
    }
    let total = input_len + output_len;
    if series.time() < total {
        return Err(Error::InsufficientData(format!(
            "series of {} samples is shorter than ℓ_i + ℓ_o = {total}",
            series.time()
        )));
    }
    let n = (series.time() - total) / hop + 1;
    let row = series.channels() * series.scales();
    let mut inputs = Vec::with_capacity(n * input_len * row);
    let mut targets = Vec::with_capacity(n * output_len * row);
    let mut in_origins = Vec::with_capacity(n);
    let mut out_origins = Vec::with_capacity(n);
    for k in 0..n {
        let s = k * hop;
        inputs.extend_from_slice(&series.data()[s * row..(s + input_len) * row]);
        targets.extend_from_slice(&series.data()[(s + input_len) * row..(s + total) * row]);
        in_origins.push(WindowOrigin { source, start: s });
        out_origins.push(WindowOrigin {
            source,
            start: s + input_len,
        });
    }
    Ok((
        ScaleTensor::new(input_len, series.channels(), series.scales(), inputs, in_origins)?,
        ScaleTensor::new(
            output_len,
            series.channels(),
            series.scales(),
            targets,
            out_origins,
        )?,
    ))
}
