use serde::{Deserialize, Serialize};

use super::window_similarities;
use crate::error::{Error, Result};
use crate::predictor::{train_bank, EdModel, TrainConfig};
use crate::quantizer::{Codebook, LevelTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// `α`-quantile of held-out MI similarities.
    Percentile,
    /// Best F1 on held-out MI and rest similarities over a 0.001 grid.
    F1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningSpec {
    pub mode: TuningMode,
    pub alpha: f64,
    pub folds: usize,
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            mode: TuningMode::Percentile,
            alpha: 0.05,
            folds: 5,
        }
    }
}

impl TuningSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "detector.percentile_alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config("detector.folds must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub threshold: f64,
    /// Pooled held-out MI similarities, in window order.
    pub mi_similarities: Vec<f64>,
    /// Pooled held-out rest similarities (F1 mode only).
    pub rest_similarities: Vec<f64>,
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("quantile of no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * alpha;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

fn f1_at(mi: &[f64], rest: &[f64], th: f64) -> f64 {
    let tp = mi.iter().filter(|&&s| s >= th).count();
    let fp = rest.iter().filter(|&&s| s >= th).count();
    let fn_ = mi.len() - tp;
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Picks `S_th` from held-out similarities.
pub fn select_threshold(spec: &TuningSpec, mi: &[f64], rest: &[f64]) -> Result<f64> {
    spec.validate()?;
    match spec.mode {
        TuningMode::Percentile => quantile(mi, spec.alpha),
        TuningMode::F1 => {
            if rest.is_empty() {
                return Err(Error::InsufficientData("f1 tuning needs rest windows".into()));
            }
            if mi.is_empty() {
                return Err(Error::InsufficientData("f1 tuning needs MI windows".into()));
            }
            let mut best = (0.0, f64::NEG_INFINITY);
            for k in 0..=1000 {
                let th = k as f64 / 1000.0;
                let f = f1_at(mi, rest, th);
                if f > best.1 {
                    best = (th, f);
                }
            }
            Ok(best.0)
        }
    }
}

fn fold_bounds(n: usize, folds: usize, f: usize) -> (usize, usize) {
    (f * n / folds, (f + 1) * n / folds)
}

/// K-fold threshold tuning on MI training windows.
///
/// Folds are contiguous runs of windows. Each fold's bank is trained on the
/// other folds and scores the held-out MI windows (and, in F1 mode, the
/// matching contiguous fold of the rest windows).
pub fn tune_threshold(
    mi: (&LevelTensor, &LevelTensor),
    codebook: &Codebook,
    train_cfg: &TrainConfig,
    spec: &TuningSpec,
    rest: Option<(&LevelTensor, &LevelTensor)>,
    workers: Option<usize>,
) -> Result<TuningOutcome> {
    spec.validate()?;
    let n = mi.0.n_windows();
    if spec.folds > n {
        return Err(Error::InsufficientData(format!(
            "{} folds need at least as many MI windows, got {n}",
            spec.folds
        )));
    }
    if spec.mode == TuningMode::F1 && rest.is_none_or(|r| r.0.n_windows() < spec.folds) {
        return Err(Error::InsufficientData(
            "f1 tuning needs at least one rest window per fold".into(),
        ));
    }
    let mut mi_sims = Vec::with_capacity(n);
    let mut rest_sims = Vec::new();
    for f in 0..spec.folds {
        let (a, b) = fold_bounds(n, spec.folds, f);
        let train_idx: Vec<usize> = (0..a).chain(b..n).collect();
        let held_idx: Vec<usize> = (a..b).collect();
        let bank: Vec<EdModel> = train_bank(
            &mi.0.select(&train_idx),
            &mi.1.select(&train_idx),
            train_cfg,
            workers,
        )?
        .into_iter()
        .map(|o| o.model)
        .collect();
        mi_sims.extend(window_similarities(
            &bank,
            codebook,
            &mi.0.select(&held_idx),
            &mi.1.select(&held_idx),
        )?);
        if let (TuningMode::F1, Some((rx, ry))) = (spec.mode, rest) {
            let (ra, rb) = fold_bounds(rx.n_windows(), spec.folds, f);
            let idx: Vec<usize> = (ra..rb).collect();
            rest_sims.extend(window_similarities(
                &bank,
                codebook,
                &rx.select(&idx),
                &ry.select(&idx),
            )?);
        }
    }
    Ok(TuningOutcome {
        threshold: select_threshold(spec, &mi_sims, &rest_sims)?,
        mi_similarities: mi_sims,
        rest_similarities: rest_sims,
    })
}
