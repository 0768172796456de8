//! Similarity scoring, stream detection, threshold tuning and majority-vote
//! error correction.

mod tune;

pub use tune::{quantile, select_threshold, tune_threshold, TuningMode, TuningOutcome, TuningSpec};

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::EdModel;
use crate::preprocess::{make_windows, ScaleSeries};
use crate::quantizer::{Codebook, LevelTensor, PairId};
use crate::signal_io::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Similarity threshold `S_th`.
    pub threshold: f64,
    pub input_len: usize,
    pub output_len: usize,
    pub hop: usize,
    /// Majority-vote neighbors `N_s` (even).
    pub n_s: usize,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "S_th must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.input_len == 0 || self.output_len == 0 || self.hop == 0 {
            return Err(Error::Config("ℓ_i, ℓ_o and hop must be >= 1".into()));
        }
        if !self.n_s.is_multiple_of(2) {
            return Err(Error::Config(format!("N_s must be even, got {}", self.n_s)));
        }
        Ok(())
    }

    /// Extra samples the correction pass waits for.
    pub fn correction_lookahead(&self) -> usize {
        self.n_s / 2 * self.hop
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDecision {
    pub segment_index: usize,
    pub start_sample: usize,
    pub similarity: f64,
    pub raw_label: Label,
    pub corrected_label: Label,
    /// First sample index at which `corrected_label` is known.
    pub decision_available_at_sample: usize,
}

impl SegmentDecision {
    /// First sample index at which `raw_label` is known.
    pub fn raw_available_at_sample(&self, output_len: usize) -> usize {
        self.start_sample + output_len
    }
}

#[inline]
fn term(pred: f64, recv: f64) -> f64 {
    let den = pred.abs() + recv.abs();
    if den == 0.0 {
        1.0
    } else {
        1.0 - (pred - recv).abs() / den
    }
}

/// Mean of `1 − |ŷ − y| / (|ŷ| + |y|)` over matching entries; a `0/0` term
/// counts as 1.
pub fn similarity(predicted: &[f64], received: &[f64]) -> Result<f64> {
    if predicted.len() != received.len() || predicted.is_empty() {
        return Err(Error::Shape(format!(
            "similarity over {} predicted and {} received values",
            predicted.len(),
            received.len()
        )));
    }
    if predicted.iter().chain(received).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity input".into()));
    }
    let sum: f64 = predicted.iter().zip(received).map(|(&a, &b)| term(a, b)).sum();
    Ok(sum / predicted.len() as f64)
}

fn check_bank(bank: &[EdModel], codebook: &Codebook) -> Result<()> {
    let pairs = PairId::all(codebook.channels(), codebook.scales());
    if bank.len() != pairs.len() {
        return Err(Error::Incompatible(format!(
            "bank has {} models, codebook expects {}",
            bank.len(),
            pairs.len()
        )));
    }
    for (m, p) in bank.iter().zip(&pairs) {
        if m.pair != *p {
            return Err(Error::Incompatible(format!(
                "model {} found where {p} belongs",
                m.pair
            )));
        }
        if m.shape.levels != codebook.levels {
            return Err(Error::Incompatible(format!(
                "model {p} has v = {}, codebook v = {}",
                m.shape.levels, codebook.levels
            )));
        }
    }
    Ok(())
}

/// Similarity of every window: each pair's model predicts from the input
/// levels and both sides are dequantized through the codebook.
pub fn window_similarities(
    bank: &[EdModel],
    codebook: &Codebook,
    inputs: &LevelTensor,
    targets: &LevelTensor,
) -> Result<Vec<f64>> {
    check_bank(bank, codebook)?;
    if inputs.n_windows() != targets.n_windows()
        || (inputs.channels(), inputs.scales()) != (codebook.channels(), codebook.scales())
        || (targets.channels(), targets.scales()) != (codebook.channels(), codebook.scales())
    {
        return Err(Error::Shape("window tensors disagree with the codebook".into()));
    }
    let (li, lo) = (inputs.window_len(), targets.window_len());
    for m in bank {
        if (m.shape.input_len, m.shape.output_len) != (li, lo) {
            return Err(Error::Incompatible(format!(
                "model {} expects ℓ_i = {}, ℓ_o = {}; windows have {li}, {lo}",
                m.pair, m.shape.input_len, m.shape.output_len
            )));
        }
    }
    let n = inputs.n_windows();
    // Per pair, per window: the sum of its ℓ_o terms.
    let per_pair: Vec<Vec<f64>> = bank
        .par_iter()
        .map(|model| {
            let pair = model.pair;
            let mut ws = model.workspace();
            let mut history = vec![0usize; li];
            (0..n)
                .map(|k| {
                    history
                        .iter_mut()
                        .enumerate()
                        .for_each(|(t, h)| *h = inputs.get(k, t, pair));
                    model
                        .predict_levels_with(&mut ws, &history)
                        .expect("levels come from the same codebook");
                    ws.levels()
                        .iter()
                        .enumerate()
                        .map(|(i, &pl)| {
                            let yhat = codebook.dequantize_unchecked(pl, pair);
                            let y = codebook.dequantize_unchecked(targets.get(k, i, pair), pair);
                            term(yhat, y)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let denom = (bank.len() * lo) as f64;
    Ok((0..n)
        .map(|k| per_pair.iter().map(|col| col[k]).sum::<f64>() / denom)
        .collect())
}

/// Scores and labels every segment `[t, t + ℓ_o)` for `t = ℓ_i, ℓ_i + hop, …`.
///
/// Segment `t` reads only samples `< t + ℓ_o`.
pub fn detect_stream(
    series: &ScaleSeries,
    bank: &[EdModel],
    codebook: &Codebook,
    cfg: &DetectorConfig,
) -> Result<Vec<SegmentDecision>> {
    cfg.validate()?;
    if series.time() < cfg.input_len + cfg.output_len {
        return Err(Error::InsufficientData(format!(
            "stream of {} samples is shorter than ℓ_i + ℓ_o = {}",
            series.time(),
            cfg.input_len + cfg.output_len
        )));
    }
    let (x, y) = make_windows(series, cfg.input_len, cfg.output_len, cfg.hop, 0)?;
    let sims = window_similarities(
        bank,
        codebook,
        &codebook.quantize_tensor(&x)?,
        &codebook.quantize_tensor(&y)?,
    )?;
    let raw: Vec<Label> = sims
        .iter()
        .map(|&s| {
            if s >= cfg.threshold {
                Label::MiTask
            } else {
                Label::Rest
            }
        })
        .collect();
    let corrected = error_correct(&raw, cfg.n_s)?;
    Ok(y.origins()
        .iter()
        .zip(sims)
        .zip(raw.into_iter().zip(corrected))
        .enumerate()
        .map(|(i, ((o, s), (r, c)))| SegmentDecision {
            segment_index: i,
            start_sample: o.start,
            similarity: s,
            raw_label: r,
            corrected_label: c,
            decision_available_at_sample: o.start + cfg.output_len + cfg.correction_lookahead(),
        })
        .collect())
}

/// Single-pass majority vote over `{i − N_s/2, …, i + N_s/2}`, truncated at
/// the ends; ties keep the original label.
pub fn error_correct(labels: &[Label], n_s: usize) -> Result<Vec<Label>> {
    if !n_s.is_multiple_of(2) {
        return Err(Error::Config(format!("N_s must be even, got {n_s}")));
    }
    let half = n_s / 2;
    Ok((0..labels.len())
        .map(|i| {
            let window = &labels[i.saturating_sub(half)..(i + half + 1).min(labels.len())];
            let mi = window.iter().filter(|l| l.is_positive()).count();
            let rest = window.len() - mi;
            match mi.cmp(&rest) {
                std::cmp::Ordering::Greater => Label::MiTask,
                std::cmp::Ordering::Less => Label::Rest,
                std::cmp::Ordering::Equal => labels[i],
            }
        })
        .collect())
}

pub const DECISIONS_HEADER: &str =
    "segment_index,start_sample,S,raw_label,corrected_label,decision_available_at_sample";

pub fn decisions_to_csv(decisions: &[SegmentDecision]) -> String {
    let mut out = String::from(DECISIONS_HEADER);
    out.push('\n');
    for d in decisions {
        let _ = writeln!(
            out,
            "{},{},{:.6},{},{},{}",
            d.segment_index,
            d.start_sample,
            d.similarity,
            d.raw_label,
            d.corrected_label,
            d.decision_available_at_sample
        );
    }
    out
}

pub fn parse_decisions_csv(text: &str) -> Result<Vec<SegmentDecision>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(DECISIONS_HEADER) {
        return Err(Error::Config("decisions CSV has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(row, line)| {
            let bad = |what: &str| Error::Config(format!("decisions row {row}: bad {what}"));
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 6 {
                return Err(bad("column count"));
            }
            let similarity: f64 = f[2].parse().map_err(|_| bad("S"))?;
            if !(0.0..=1.0).contains(&similarity) {
                return Err(bad("S"));
            }
            Ok(SegmentDecision {
                segment_index: f[0].parse().map_err(|_| bad("segment_index"))?,
                start_sample: f[1].parse().map_err(|_| bad("start_sample"))?,
                similarity,
                raw_label: f[3].parse().map_err(|_| bad("raw_label"))?,
                corrected_label: f[4].parse().map_err(|_| bad("corrected_label"))?,
                decision_available_at_sample: f[5]
                    .parse()
                    .map_err(|_| bad("decision_available_at_sample"))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
