//! The pipeline stages on in-memory data.

use crate::detector::{detect_stream, tune_threshold, DetectorConfig, SegmentDecision, TuningOutcome};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, confusion_counts, EvalReport, ReportContext};
use crate::predictor::{train_bank, EdModel, TrainConfig, TrainOutcome};
use crate::preprocess::{
    fit_pca, make_windows, preprocess_recording, CwtSpec, PcaModel, ScaleSeries, ScaleTensor, WindowOrigin,
};
use crate::quantizer::{fit_codebook, Codebook, LevelTensor};
use crate::signal_io::{compose_continuous, interval_labels, synth_generate, Label, Recording};

use super::config::{PipelineConfig, SampleLengths};

/// The synthetic corpus divided for training, tuning and testing.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    pub train_mi: Vec<Recording>,
    /// Rest trials kept aside for F1-mode tuning.
    pub val_rest: Vec<Recording>,
    /// Held-out MI trials joined by the remaining rest trials.
    pub stream: Recording,
}

/// Number of MI trials that go to training.
pub fn train_count(n_mi: usize, fraction: f64) -> Result<usize> {
    if n_mi < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 MI trials to split, got {n_mi}"
        )));
    }
    Ok(((n_mi as f64 * fraction).round() as usize).clamp(1, n_mi - 1))
}

pub fn synthesize(cfg: &PipelineConfig) -> Result<SplitCorpus> {
    let (mi, rest) = synth_generate(&cfg.synth_config())?;
    let n_train = train_count(mi.len(), cfg.split.train_fraction)?;
    let n_val = rest.len() / 2;
    let stream_rest = if n_val < rest.len() {
        &rest[n_val..]
    } else {
        &rest[..]
    };
    let stream = compose_continuous(
        &mi[n_train..],
        stream_rest,
        cfg.synth.seed.wrapping_add(1),
        cfg.split.min_rest_s,
        cfg.split.max_rest_s,
    )?;
    Ok(SplitCorpus {
        train_mi: mi[..n_train].to_vec(),
        val_rest: rest[..n_val].to_vec(),
        stream,
    })
}

/// Preprocessed series and the fitted transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub pca: PcaModel,
    pub cwt: CwtSpec,
    pub codebook: Codebook,
    pub train: Vec<ScaleSeries>,
    pub val_rest: Vec<ScaleSeries>,
    pub stream: ScaleSeries,
}

/// Rounds to the `f32` storage precision so reloaded series are identical.
fn to_storage_precision(mut s: ScaleSeries) -> ScaleSeries {
    s.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    s
}

pub fn prepare(cfg: &PipelineConfig, corpus: &SplitCorpus) -> Result<Prepared> {
    let pca = fit_pca(&corpus.train_mi, &cfg.bandpass, cfg.pca_retention)?;
    let cwt = cfg.cwt_spec()?;
    let run = |r: &Recording| -> Result<ScaleSeries> {
        Ok(to_storage_precision(preprocess_recording(
            r,
            &cfg.bandpass,
            &pca,
            &cwt,
        )?))
    };
    let train = corpus.train_mi.iter().map(run).collect::<Result<Vec<_>>>()?;
    let val_rest = corpus.val_rest.iter().map(run).collect::<Result<Vec<_>>>()?;
    let stream = run(&corpus.stream)?;
    let codebook = fit_series_codebook(&train, cfg.v)?;
    Ok(Prepared {
        pca,
        cwt,
        codebook,
        train,
        val_rest,
        stream,
    })
}

/// Per-stream ranges over every sample of the training series.
pub fn fit_series_codebook(train: &[ScaleSeries], levels: usize) -> Result<Codebook> {
    let tensors = train
        .iter()
        .map(|s| {
            ScaleTensor::new(
                s.time(),
                s.channels(),
                s.scales(),
                s.data().to_vec(),
                vec![WindowOrigin { source: 0, start: 0 }],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    fit_codebook(&tensors.iter().collect::<Vec<_>>(), levels)
}

/// Quantized `(inputs, targets)` windows cut from every series.
pub fn quantized_windows(
    series: &[ScaleSeries],
    codebook: &Codebook,
    input_len: usize,
    output_len: usize,
    hop: usize,
) -> Result<(LevelTensor, LevelTensor)> {
    let mut acc: Option<(ScaleTensor, ScaleTensor)> = None;
    for (i, s) in series.iter().enumerate() {
        let (x, y) = make_windows(s, input_len, output_len, hop, i)?;
        match acc.as_mut() {
            None => acc = Some((x, y)),
            Some((ax, ay)) => {
                ax.extend(&x)?;
                ay.extend(&y)?;
            }
        }
    }
    let (x, y) = acc.ok_or_else(|| Error::InsufficientData("no series to window".into()))?;
    Ok((codebook.quantize_tensor(&x)?, codebook.quantize_tensor(&y)?))
}

pub fn train_models(
    prep: &Prepared,
    lengths: &SampleLengths,
    train: &TrainConfig,
    workers: Option<usize>,
) -> Result<Vec<TrainOutcome>> {
    let (x, y) = quantized_windows(
        &prep.train,
        &prep.codebook,
        lengths.input_len,
        lengths.output_len,
        lengths.train_hop,
    )?;
    train_bank(&x, &y, train, workers)
}

pub fn tune(
    cfg: &PipelineConfig,
    prep: &Prepared,
    lengths: &SampleLengths,
    train: &TrainConfig,
    workers: Option<usize>,
) -> Result<TuningOutcome> {
    let (li, lo, hop) = (lengths.input_len, lengths.output_len, lengths.train_hop);
    let (x, y) = quantized_windows(&prep.train, &prep.codebook, li, lo, hop)?;
    let rest = if prep.val_rest.is_empty() {
        None
    } else {
        Some(quantized_windows(&prep.val_rest, &prep.codebook, li, lo, hop)?)
    };
    tune_threshold(
        (&x, &y),
        &prep.codebook,
        train,
        &cfg.detector.tuning(),
        rest.as_ref().map(|(a, b)| (a, b)),
        workers,
    )
}

pub fn detector_config(cfg: &PipelineConfig, lengths: &SampleLengths, threshold: f64) -> DetectorConfig {
    DetectorConfig {
        threshold,
        input_len: lengths.input_len,
        output_len: lengths.output_len,
        hop: lengths.hop,
        n_s: cfg.detector.n_s,
    }
}

pub fn detect(
    stream: &ScaleSeries,
    bank: &[EdModel],
    codebook: &Codebook,
    det: &DetectorConfig,
) -> Result<Vec<SegmentDecision>> {
    detect_stream(stream, bank, codebook, det)
}

/// Raw and corrected reports of `decisions` against the stream markers.
pub fn evaluate(
    stream: &Recording,
    decisions: &[SegmentDecision],
    output_len: usize,
    overlap_rule: f64,
    context: ReportContext,
) -> Result<(EvalReport, EvalReport)> {
    let starts: Vec<usize> = decisions.iter().map(|d| d.start_sample).collect();
    let truth = interval_labels(stream, &starts, output_len, overlap_rule)?;
    let raw: Vec<Label> = decisions.iter().map(|d| d.raw_label).collect();
    let corrected: Vec<Label> = decisions.iter().map(|d| d.corrected_label).collect();
    let report = |pred: &[Label]| -> Result<EvalReport> {
        Ok(compute_metrics(confusion_counts(pred, &truth)?).with_context(context))
    };
    Ok((report(&raw)?, report(&corrected)?))
}
