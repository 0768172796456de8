use std::path::Path;
use std::process::{Command, Output};

use mi_onset::detector::{decisions_to_csv, SegmentDecision};
use mi_onset::pipeline::{load_stream, parse_config, PipelineConfig};
use mi_onset::signal_io::interval_labels;
use mi_onset::Label;

const TINY: &str = "\
[train]
epochs = 2
hidden_size = 4

[detector]
folds = 2

[synth]
n_mi_trials = 6
n_rest_trials = 4
";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mi-onset"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_config_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&write_config(dir.path(), "")).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
    assert_eq!((cfg.input_len_s, cfg.output_len_s), (0.5, 0.5));
    assert_eq!(cfg.train.hidden_size, 90);
    assert_eq!(cfg.train.lambda, 0.001);
    assert_eq!(cfg.train.epochs, 50);
    assert_eq!((cfg.pca_retention, cfg.q), (0.7, 6));
    let l = cfg.lengths().unwrap();
    assert_eq!((l.input_len, l.output_len, l.hop), (50, 50, 50));
}

#[test]
fn inverted_band_is_rejected_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "[bandpass]\nlow_hz = 20.0\nhigh_hz = 13.0\n");
    let e = parse_config(&p).unwrap_err().to_string();
    assert!(e.contains("bandpass.low_hz must be < high_hz"), "{e}");
    let out = bin(&["synth", "--config", s(&p), "--out", s(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandpass.low_hz must be < high_hz"));
}

#[test]
fn seconds_convert_to_samples_once() {
    let cfg = PipelineConfig::from_toml_str("output_len_s = 0.25\n").unwrap();
    assert_eq!(cfg.lengths().unwrap().output_len, 25);
    assert!(PipelineConfig::from_toml_str("output_len_s = 0.253\n").is_err());
}

#[test]
fn unknown_keys_are_errors() {
    assert!(PipelineConfig::from_toml_str("[train]\nepoch = 3\n").is_err());
    assert!(PipelineConfig::from_toml_str("sample_rate = 100.0\n").is_err());
}

#[test]
fn stages_chain_to_the_pipeline_result() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, TINY);
    let c = s(&cfg);
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    ok(&["synth", "--config", c, "--out", &p("corpus")]);
    ok(&[
        "preprocess",
        "--config",
        c,
        "--in",
        &p("corpus"),
        "--out",
        &p("prep"),
    ]);
    ok(&["train", "--config", c, "--in", &p("prep"), "--out", &p("bundle")]);

    let out = bin(&[
        "detect",
        "--in",
        &p("prep"),
        "--bundle",
        &p("bundle"),
        "--out",
        &p("det"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold not tuned"));

    ok(&["tune", "--in", &p("prep"), "--bundle", &p("bundle")]);
    ok(&[
        "detect",
        "--in",
        &p("prep"),
        "--bundle",
        &p("bundle"),
        "--out",
        &p("det"),
    ]);
    let staged = ok(&[
        "evaluate",
        "--in",
        &p("corpus"),
        "--bundle",
        &p("bundle"),
        "--decisions",
        &p("det/decisions.csv"),
        "--out",
        &p("det"),
    ]);

    let whole = ok(&["pipeline", "--config", c, "--out", &p("run")]);
    assert_eq!(staged, whole);
    assert!(whole.starts_with("labels,Prec.,TPR,TNR,FPR,FNR,F1\nraw,"));
    for f in [
        "decisions.csv",
        "report_raw.json",
        "report_corrected.json",
        "report_corrected.csv",
    ] {
        assert_eq!(
            std::fs::read(d.join("det").join(f)).unwrap(),
            std::fs::read(d.join("run").join(f)).unwrap(),
            "{f}"
        );
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/report_raw.json")).unwrap()).unwrap();
    for key in ["precision", "tpr", "tnr", "fpr", "fnr", "f1"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn perfect_decisions_score_f1_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, TINY);
    let run = d.join("run");
    ok(&["pipeline", "--config", s(&cfg), "--out", s(&run)]);

    let stream = load_stream(&run.join("corpus")).unwrap();
    let starts: Vec<usize> = (50..stream.n_samples() - 50).step_by(50).collect();
    let truth = interval_labels(&stream, &starts, 50, 0.5).unwrap();
    assert!(truth.contains(&Label::MiTask) && truth.contains(&Label::Rest));
    let perfect: Vec<SegmentDecision> = starts
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(i, (&t, &l))| SegmentDecision {
            segment_index: i,
            start_sample: t,
            similarity: 0.5,
            raw_label: l,
            corrected_label: l,
            decision_available_at_sample: t + 100,
        })
        .collect();
    let path = d.join("perfect.csv");
    std::fs::write(&path, decisions_to_csv(&perfect)).unwrap();
    let rows = ok(&[
        "evaluate",
        "--in",
        s(&run.join("corpus")),
        "--bundle",
        s(&run.join("bundle")),
        "--decisions",
        s(&path),
        "--out",
        s(&d.join("eval")),
    ]);
    assert!(
        rows.contains("raw,1.000000,1.000000,1.000000,0.000000,0.000000,1.000000"),
        "{rows}"
    );
}

#[test]
fn seed_flag_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, TINY);
    ok(&["synth", "--config", s(&cfg), "--out", s(&d.join("a"))]);
    ok(&[
        "synth",
        "--config",
        s(&cfg),
        "--out",
        s(&d.join("b")),
        "--seed",
        "99",
    ]);
    ok(&["synth", "--config", s(&cfg), "--out", s(&d.join("c"))]);
    let read = |x: &str| std::fs::read(d.join(x).join("stream.f32")).unwrap();
    assert_ne!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
}

#[test]
fn corrupted_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, TINY);
    let run = d.join("run");
    ok(&["pipeline", "--config", s(&cfg), "--out", s(&run)]);
    std::fs::write(run.join("prep/stream.f32"), [0u8; 12]).unwrap();
    let out = bin(&[
        "detect",
        "--in",
        s(&run.join("prep")),
        "--bundle",
        s(&run.join("bundle")),
        "--out",
        s(d),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sample-count mismatch"));

    let out = bin(&[
        "tune",
        "--in",
        s(&d.join("missing")),
        "--bundle",
        s(&run.join("bundle")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: tune"));
}
