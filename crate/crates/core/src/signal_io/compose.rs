//! Continuous test streams and their segment-level ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Label, Marker, Recording};
use crate::error::{Error, Result};

/// Builds a continuous stream from MI trials with rest gaps in between.
///
/// A coin flip decides whether the stream opens with rest; every following MI
/// trial is preceded by a rest gap of uniform random length in
/// `[min_rest_s, max_rest_s]`. Gap material is cut from the rest trials in a
/// seed-shuffled cyclic order. Zero-length gaps are omitted, so the markers
/// always partition the stream.
pub fn compose_continuous(
    mi_trials: &[Recording],
    rest_trials: &[Recording],
    rng_seed: u64,
    min_rest_s: f64,
    max_rest_s: f64,
) -> Result<Recording> {
    let first = mi_trials
        .first()
        .ok_or_else(|| Error::InsufficientData("no MI trials to compose".into()))?;
    for (i, r) in mi_trials.iter().chain(rest_trials).enumerate() {
        if r.sample_rate_hz() != first.sample_rate_hz() {
            return Err(Error::Incompatible(format!(
                "trial {i} sampled at {} Hz, expected {} Hz",
                r.sample_rate_hz(),
                first.sample_rate_hz()
            )));
        }
        if r.channels() != first.channels() {
            return Err(Error::Incompatible(format!(
                "trial {i} has a different channel set"
            )));
        }
    }
    if !(min_rest_s >= 0.0 && max_rest_s >= min_rest_s && max_rest_s.is_finite()) {
        return Err(Error::Config(format!(
            "rest duration range [{min_rest_s}, {max_rest_s}] is invalid"
        )));
    }

    let sr = first.sample_rate_hz();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut order: Vec<usize> = (0..rest_trials.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = RestCursor {
        trials: rest_trials,
        order,
        slot: 0,
        offset: 0,
    };

    let mut samples = Vec::new();
    let mut markers = Vec::new();
    let mut len = 0usize;
    let leading = rng.random::<bool>();
    for (i, trial) in mi_trials.iter().enumerate() {
        if i > 0 || leading {
            let secs = if max_rest_s > min_rest_s {
                rng.random_range(min_rest_s..=max_rest_s)
            } else {
                min_rest_s
            };
            let gap = (secs * sr).round() as usize;
            if gap > 0 {
                cursor.take(gap, &mut samples)?;
                markers.push(Marker::new(len, gap, Label::Rest));
                len += gap;
            }
        }
        samples.extend_from_slice(trial.samples());
        markers.push(Marker::new(len, trial.n_samples(), Label::MiTask));
        len += trial.n_samples();
    }

    Recording::new(
        sr,
        first.channels().to_vec(),
        samples,
        first.topology().clone(),
        markers,
    )
}

struct RestCursor<'a> {
    trials: &'a [Recording],
    order: Vec<usize>,
    slot: usize,
    offset: usize,
}

impl RestCursor<'_> {
    fn take(&mut self, mut n: usize, out: &mut Vec<f64>) -> Result<()> {
        if self.trials.is_empty() {
            return Err(Error::InsufficientData(
                "rest gap requested but no rest trials were supplied".into(),
            ));
        }
        while n > 0 {
            let trial = &self.trials[self.order[self.slot]];
            let avail = trial.n_samples() - self.offset;
            let k = avail.min(n);
            let c = trial.n_channels();
            out.extend_from_slice(&trial.samples()[self.offset * c..(self.offset + k) * c]);
            self.offset += k;
            n -= k;
            if self.offset == trial.n_samples() {
                self.offset = 0;
                self.slot = (self.slot + 1) % self.order.len();
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentTruth {
    pub segment_index: usize,
    pub start_sample: usize,
    pub label: Label,
}

/// Per-sample prefix counts of MI-task coverage.
fn mi_prefix(rec: &Recording) -> Vec<usize> {
    let mut inside = vec![0u8; rec.n_samples()];
    for m in rec.markers().iter().filter(|m| m.label == Label::MiTask) {
        inside[m.onset_sample..m.end()].fill(1);
    }
    let mut prefix = Vec::with_capacity(inside.len() + 1);
    prefix.push(0);
    let mut acc = 0;
    for v in inside {
        acc += v as usize;
        prefix.push(acc);
    }
    prefix
}

/// Labels segment `i = [i·hop, i·hop + segment_len)` as MI-task iff more than
/// `overlap_rule` of its samples lie inside MI-task markers.
pub fn segment_truth(
    rec: &Recording,
    segment_len: usize,
    hop: usize,
    overlap_rule: f64,
) -> Result<Vec<SegmentTruth>> {
    if segment_len == 0 || hop == 0 {
        return Err(Error::Config("segment_len and hop must be >= 1".into()));
    }
    let n = rec.n_samples();
    if segment_len > n {
        return Err(Error::InsufficientData(format!(
            "segment_len {segment_len} exceeds {n} samples"
        )));
    }
    let prefix = mi_prefix(rec);
    Ok((0..=(n - segment_len) / hop)
        .map(|i| {
            let start = i * hop;
            SegmentTruth {
                segment_index: i,
                start_sample: start,
                label: label_from_prefix(&prefix, start, segment_len, overlap_rule),
            }
        })
        .collect())
}

/// Ground-truth label of the arbitrary interval `[start, start + len)`.
pub fn interval_labels(
    rec: &Recording,
    starts: &[usize],
    len: usize,
    overlap_rule: f64,
) -> Result<Vec<Label>> {
    let prefix = mi_prefix(rec);
    starts
        .iter()
        .map(|&s| {
            if len == 0 || s + len > rec.n_samples() {
                Err(Error::Shape(format!(
                    "interval [{s}, {}) outside {} samples",
                    s + len,
                    rec.n_samples()
                )))
            } else {
                Ok(label_from_prefix(&prefix, s, len, overlap_rule))
            }
        })
        .collect()
}

fn label_from_prefix(prefix: &[usize], start: usize, len: usize, rule: f64) -> Label {
    let inside = prefix[start + len] - prefix[start];
    if inside as f64 / len as f64 > rule {
        Label::MiTask
    } else {
        Label::Rest
    }
}
