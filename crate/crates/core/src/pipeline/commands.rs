//! Directory-to-directory stage commands.

use std::fmt::Write as _;
use std::path::Path;

use crate::detector::{decisions_to_csv, parse_decisions_csv, SegmentDecision};
use crate::error::{Error, Result};
use crate::fsio;
use crate::metrics::{EvalReport, ReportContext, REPORT_CSV_HEADER};

use super::artifacts::{load_corpus, load_prepared, load_stream, save_corpus, save_prepared, ModelBundle};
use super::config::PipelineConfig;
use super::stages::{detect, detector_config, evaluate, prepare, synthesize, train_models, tune, Prepared};

pub const DECISIONS_FILE: &str = "decisions.csv";

pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    save_corpus(out, &synthesize(cfg)?)
}

pub fn cmd_preprocess(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus(input)?;
    save_prepared(out, &prepare(cfg, &corpus)?)
}

fn check_prepared(cfg: &PipelineConfig, prep: &Prepared) -> Result<()> {
    if prep.codebook.levels != cfg.v || prep.cwt.q() != cfg.q {
        return Err(Error::Incompatible(format!(
            "preprocessed data has v = {}, q = {}; config has v = {}, q = {}",
            prep.codebook.levels,
            prep.cwt.q(),
            cfg.v,
            cfg.q
        )));
    }
    Ok(())
}

fn build_bundle(cfg: &PipelineConfig, prep: &Prepared, workers: Option<usize>) -> Result<ModelBundle> {
    check_prepared(cfg, prep)?;
    let lengths = cfg.lengths()?;
    let models = train_models(prep, &lengths, &cfg.train, workers)?
        .into_iter()
        .map(|o| o.model)
        .collect();
    Ok(ModelBundle {
        config: cfg.clone(),
        pca: prep.pca.clone(),
        cwt: prep.cwt.clone(),
        codebook: prep.codebook.clone(),
        models,
        threshold: None,
    })
}

/// Trains the ED bank; the written bundle has no threshold yet.
pub fn cmd_train(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    workers: Option<usize>,
) -> Result<ModelBundle> {
    let bundle = build_bundle(cfg, &load_prepared(input)?, workers)?;
    bundle.save(out)?;
    Ok(bundle)
}

fn check_bundle_matches(bundle: &ModelBundle, prep: &Prepared) -> Result<()> {
    if bundle.codebook != prep.codebook || bundle.pca != prep.pca || bundle.cwt != prep.cwt {
        return Err(Error::Incompatible(
            "bundle was trained on different preprocessing".into(),
        ));
    }
    Ok(())
}

fn tune_bundle(bundle: &mut ModelBundle, prep: &Prepared, workers: Option<usize>) -> Result<f64> {
    check_bundle_matches(bundle, prep)?;
    let cfg = &bundle.config;
    let outcome = tune(cfg, prep, &cfg.lengths()?, &cfg.train, workers)?;
    bundle.threshold = Some(outcome.threshold);
    Ok(outcome.threshold)
}

/// Tunes `S_th` by cross-validation and stores it in the bundle.
pub fn cmd_tune(input: &Path, bundle_dir: &Path, workers: Option<usize>) -> Result<f64> {
    let mut bundle = ModelBundle::load(bundle_dir)?;
    let th = tune_bundle(&mut bundle, &load_prepared(input)?, workers)?;
    bundle.save_meta(bundle_dir)?;
    Ok(th)
}

fn detect_with(bundle: &ModelBundle, prep: &Prepared) -> Result<Vec<SegmentDecision>> {
    let threshold = bundle.tuned_threshold()?;
    check_bundle_matches(bundle, prep)?;
    let det = detector_config(&bundle.config, &bundle.config.lengths()?, threshold);
    detect(&prep.stream, &bundle.models, &bundle.codebook, &det)
}

/// Labels the preprocessed stream and writes `decisions.csv`.
pub fn cmd_detect(input: &Path, bundle_dir: &Path, out: &Path) -> Result<Vec<SegmentDecision>> {
    let bundle = ModelBundle::load(bundle_dir)?;
    let decisions = detect_with(&bundle, &load_prepared(input)?)?;
    fsio::write_atomic(&out.join(DECISIONS_FILE), decisions_to_csv(&decisions).as_bytes())?;
    Ok(decisions)
}

/// Raw and corrected reports, written as `report_{raw,corrected}.{json,csv}`.
pub fn cmd_evaluate(
    corpus_dir: &Path,
    bundle_dir: &Path,
    decisions_path: &Path,
    out: &Path,
) -> Result<(EvalReport, EvalReport)> {
    let bundle = ModelBundle::load(bundle_dir)?;
    let stream = load_stream(corpus_dir)?;
    let decisions = parse_decisions_csv(&fsio::read_string(decisions_path)?)?;
    let reports = evaluate_decisions(&bundle, &stream, &decisions)?;
    write_reports(out, &reports)?;
    Ok(reports)
}

fn evaluate_decisions(
    bundle: &ModelBundle,
    stream: &crate::signal_io::Recording,
    decisions: &[SegmentDecision],
) -> Result<(EvalReport, EvalReport)> {
    let cfg = &bundle.config;
    let lengths = cfg.lengths()?;
    let context = ReportContext {
        output_len: lengths.output_len,
        n_s: cfg.detector.n_s,
        threshold: bundle.tuned_threshold()?,
    };
    evaluate(
        stream,
        decisions,
        lengths.output_len,
        cfg.split.overlap_rule,
        context,
    )
}

fn write_reports(out: &Path, (raw, corrected): &(EvalReport, EvalReport)) -> Result<()> {
    for (name, r) in [("raw", raw), ("corrected", corrected)] {
        fsio::write_atomic(&out.join(format!("report_{name}.json")), r.to_json().as_bytes())?;
        fsio::write_atomic(&out.join(format!("report_{name}.csv")), r.to_csv().as_bytes())?;
    }
    Ok(())
}

/// Header and `raw`/`corrected` rows as printed by `pipeline`.
pub fn metric_rows(raw: &EvalReport, corrected: &EvalReport) -> String {
    format!(
        "labels,{REPORT_CSV_HEADER}\nraw,{}\ncorrected,{}\n",
        raw.csv_row(),
        corrected.csv_row()
    )
}

/// Every stage on synthetic data, each reading the previous stage's files:
/// `corpus/`, `prep/`, `bundle/`, then decisions and reports in `out`.
pub fn cmd_pipeline(
    cfg: &PipelineConfig,
    out: &Path,
    workers: Option<usize>,
) -> Result<(EvalReport, EvalReport)> {
    let (corpus, prep, bundle) = (out.join("corpus"), out.join("prep"), out.join("bundle"));
    cmd_synth(cfg, &corpus)?;
    cmd_preprocess(cfg, &corpus, &prep)?;
    cmd_train(cfg, &prep, &bundle, workers)?;
    cmd_tune(&prep, &bundle, workers)?;
    cmd_detect(&prep, &bundle, out)?;
    cmd_evaluate(&corpus, &bundle, &out.join(DECISIONS_FILE), out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub output_len_s: f64,
    pub hidden_size: usize,
    pub threshold: f64,
    pub raw: EvalReport,
    pub corrected: EvalReport,
}

pub const SWEEP_CSV_HEADER: &str = "output_len_s,n_h,S_th,labels,Prec.,TPR,TNR,FPR,FNR,F1";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        for (name, rep) in [("raw", &r.raw), ("corrected", &r.corrected)] {
            let _ = writeln!(
                out,
                "{},{},{:.6},{name},{}",
                r.output_len_s,
                r.hidden_size,
                r.threshold,
                rep.csv_row()
            );
        }
    }
    out
}

/// Trains, tunes and evaluates one bundle per `(ℓ_o, n_h)` in the sweep
/// section on one synthetic corpus and writes `sweep.csv`.
pub fn cmd_sweep(cfg: &PipelineConfig, out: &Path, workers: Option<usize>) -> Result<Vec<SweepRow>> {
    if cfg.sweep.hidden_sizes.is_empty() || cfg.sweep.output_lengths_s.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let corpus = synthesize(cfg)?;
    let prep = prepare(cfg, &corpus)?;
    let mut rows = Vec::new();
    for &lo in &cfg.sweep.output_lengths_s {
        for &nh in &cfg.sweep.hidden_sizes {
            let mut c = cfg.clone();
            c.output_len_s = lo;
            c.train.hidden_size = nh;
            c.validate()?;
            let mut bundle = build_bundle(&c, &prep, workers)?;
            let threshold = tune_bundle(&mut bundle, &prep, workers)?;
            let decisions = detect_with(&bundle, &prep)?;
            let (raw, corrected) = evaluate_decisions(&bundle, &corpus.stream, &decisions)?;
            rows.push(SweepRow {
                output_len_s: lo,
                hidden_size: nh,
                threshold,
                raw,
                corrected,
            });
        }
    }
    fsio::write_atomic(&out.join("sweep.csv"), sweep_to_csv(&rows).as_bytes())?;
    Ok(rows)
}
