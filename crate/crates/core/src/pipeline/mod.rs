//! Configuration, artifacts and the end-to-end stages behind the CLI.

mod artifacts;
mod commands;
mod config;
mod stages;

pub use artifacts::{
    load_corpus, load_prepared, load_series, load_stream, save_corpus, save_prepared, save_series,
    ModelBundle,
};
pub use commands::{
    cmd_detect, cmd_evaluate, cmd_pipeline, cmd_preprocess, cmd_sweep, cmd_synth, cmd_train, cmd_tune,
    metric_rows, sweep_to_csv, SweepRow, DECISIONS_FILE, SWEEP_CSV_HEADER,
};
pub use config::{
    parse_config, seconds_to_samples, DetectorSection, PipelineConfig, SampleLengths, SplitSection,
    SweepSection, SynthSection,
};
pub use stages::{
    detect, detector_config, evaluate, fit_series_codebook, prepare, quantized_windows, synthesize,
    train_count, train_models, tune, Prepared, SplitCorpus,
};
