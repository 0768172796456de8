use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::predictor::EdShape;
use crate::preprocess::ScaleTensor;
use crate::quantizer::fit_codebook;

use Label::{MiTask as T, Rest as R};

#[test]
fn similarity_examples() {
    assert_eq!(similarity(&[1.0], &[-1.0]).unwrap(), 0.0);
    assert_eq!(similarity(&[3.0], &[1.0]).unwrap(), 0.5);
    assert_eq!(similarity(&[0.0, 2.0], &[0.0, 2.0]).unwrap(), 1.0);
    assert_eq!(similarity(&[-4.5, 0.1, 7.0], &[-4.5, 0.1, 7.0]).unwrap(), 1.0);
    assert!(similarity(&[1.0], &[1.0, 2.0]).is_err());
    assert!(similarity(&[f64::NAN], &[1.0]).is_err());
}

#[test]
fn similarity_is_symmetric_and_sign_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let a: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = similarity(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert_eq!(s, similarity(&b, &a).unwrap());
        let na: Vec<f64> = a.iter().map(|x| -x).collect();
        let nb: Vec<f64> = b.iter().map(|x| -x).collect();
        assert_eq!(s, similarity(&na, &nb).unwrap());
        let c = rng.random_range(0.1..10.0);
        let ca: Vec<f64> = a.iter().map(|x| x * c).collect();
        let cb: Vec<f64> = b.iter().map(|x| x * c).collect();
        assert!((s - similarity(&ca, &cb).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn correction_examples() {
    assert_eq!(error_correct(&[T, R, T], 2).unwrap(), vec![T, T, T]);
    let any = [R, T, T, R, R, T];
    assert_eq!(error_correct(&any, 0).unwrap(), any.to_vec());
    // Boundary windows of two with a split vote keep the original.
    assert_eq!(error_correct(&[T, R], 2).unwrap(), vec![T, R]);
    assert!(error_correct(&any, 3).is_err());
    assert!(error_correct(&[], 2).unwrap().is_empty());
}

#[test]
fn correction_is_idempotent_on_long_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let mut labels = Vec::new();
        while labels.len() < 60 {
            let run = rng.random_range(2..6);
            let l = if rng.random::<bool>() { T } else { R };
            labels.extend(std::iter::repeat_n(l, run));
        }
        let once = error_correct(&labels, 2).unwrap();
        assert_eq!(once, labels);
        assert_eq!(error_correct(&once, 2).unwrap(), once);
    }
}

#[test]
fn percentile_thresholds() {
    let spec = TuningSpec::default();
    assert_eq!(select_threshold(&spec, &[0.9; 7], &[]).unwrap(), 0.9);
    let sims = [0.7, 0.2, 0.9, 0.5];
    let zero = TuningSpec { alpha: 0.0, ..spec };
    assert_eq!(select_threshold(&zero, &sims, &[]).unwrap(), 0.2);
    // Type 7: h = 3·0.5 = 1.5 between 0.5 and 0.7.
    assert!((quantile(&sims, 0.5).unwrap() - 0.6).abs() < 1e-15);
    assert_eq!(quantile(&sims, 1.0).unwrap(), 0.9);
}

#[test]
fn f1_threshold_grid() {
    let spec = TuningSpec {
        mode: TuningMode::F1,
        ..TuningSpec::default()
    };
    let th = select_threshold(&spec, &[0.9, 0.95], &[0.1, 0.2]).unwrap();
    // Exhaustive check over the grid: every point in (0.2, 0.9] is optimal.
    let grid: Vec<f64> = (0..=1000).map(|k| k as f64 / 1000.0).collect();
    let best = grid.iter().copied().find(|&g| g > 0.2 && g <= 0.9).unwrap();
    assert_eq!(th, best);
    assert_eq!(th, 0.201);
    assert!(select_threshold(&spec, &[0.9], &[]).is_err());
}

fn tiny_bank(m: usize, q: usize, shape: EdShape, seed: u64) -> Vec<EdModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PairId::all(m, q)
        .into_iter()
        .map(|p| EdModel::random(p, shape, &mut rng))
        .collect()
}

fn noise_series(time: usize, m: usize, q: usize, seed: u64) -> ScaleSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..time * m * q).map(|_| rng.random_range(-1.0..1.0)).collect();
    ScaleSeries::from_vec(time, m, q, data).unwrap()
}

fn codebook_for(series: &ScaleSeries, v: usize) -> Codebook {
    let t = ScaleTensor::new(
        series.time(),
        series.channels(),
        series.scales(),
        series.data().to_vec(),
        vec![crate::preprocess::WindowOrigin { source: 0, start: 0 }],
    )
    .unwrap();
    fit_codebook(&[&t], v).unwrap()
}

fn setup() -> (Vec<EdModel>, Codebook, DetectorConfig, ScaleSeries) {
    let shape = EdShape {
        input_len: 6,
        output_len: 4,
        levels: 8,
        hidden_size: 3,
    };
    let series = noise_series(70, 2, 2, 1);
    let cb = codebook_for(&series, 8);
    let cfg = DetectorConfig {
        threshold: 0.5,
        input_len: 6,
        output_len: 4,
        hop: 4,
        n_s: 2,
    };
    (tiny_bank(2, 2, shape, 2), cb, cfg, series)
}

#[test]
fn minimal_stream_gives_one_decision() {
    let (bank, cb, cfg, series) = setup();
    let short = ScaleSeries::from_vec(10, 2, 2, series.data()[..40].to_vec()).unwrap();
    let d = detect_stream(&short, &bank, &cb, &cfg).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].start_sample, 6);
    let shorter = ScaleSeries::from_vec(9, 2, 2, series.data()[..36].to_vec()).unwrap();
    assert!(detect_stream(&shorter, &bank, &cb, &cfg).is_err());
}

#[test]
fn decisions_follow_threshold_and_latency() {
    let (bank, cb, cfg, series) = setup();
    let d = detect_stream(&series, &bank, &cb, &cfg).unwrap();
    assert_eq!(d.len(), (70 - 10) / 4 + 1);
    for (i, x) in d.iter().enumerate() {
        assert_eq!(x.segment_index, i);
        assert_eq!(x.start_sample, 6 + 4 * i);
        assert_eq!(x.raw_label == T, x.similarity >= cfg.threshold);
        assert_eq!(x.raw_available_at_sample(4), x.start_sample + 4);
        assert_eq!(x.decision_available_at_sample, x.start_sample + 4 + 4);
    }
}

#[test]
fn future_samples_do_not_change_past_decisions() {
    let (bank, cb, cfg, series) = setup();
    let before = detect_stream(&series, &bank, &cb, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for cut in [10usize, 30, 47, 66] {
        let mut mutated = series.clone();
        let row = 4;
        for v in &mut mutated.data_mut()[cut * row..] {
            *v = rng.random_range(-1.0..1.0);
        }
        let after = detect_stream(&mutated, &bank, &cb, &cfg).unwrap();
        for (a, b) in before.iter().zip(&after) {
            if a.start_sample + cfg.output_len <= cut {
                assert_eq!(a.similarity, b.similarity);
                assert_eq!(a.raw_label, b.raw_label);
            }
        }
    }
}

#[test]
fn identical_runs_are_identical() {
    let (bank, cb, cfg, series) = setup();
    let a = detect_stream(&series, &bank, &cb, &cfg).unwrap();
    let b = detect_stream(&series, &bank, &cb, &cfg).unwrap();
    assert_eq!(decisions_to_csv(&a), decisions_to_csv(&b));
}

#[test]
fn similarity_matches_direct_evaluation() {
    let (bank, cb, cfg, series) = setup();
    let d = detect_stream(&series, &bank, &cb, &cfg).unwrap();
    for x in d.iter().take(3) {
        let t = x.start_sample;
        let (mut pred, mut recv) = (Vec::new(), Vec::new());
        for m in &bank {
            let p = m.pair;
            let hist: Vec<usize> = (t - 6..t)
                .map(|s| cb.quantize(series.get(s, p.channel, p.scale), p).unwrap())
                .collect();
            for (i, l) in m.predict_levels(&hist).unwrap().into_iter().enumerate() {
                pred.push(cb.dequantize(l, p).unwrap());
                let y = series.get(t + i, p.channel, p.scale);
                recv.push(cb.dequantize(cb.quantize(y, p).unwrap(), p).unwrap());
            }
        }
        assert!((x.similarity - similarity(&pred, &recv).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn bank_must_match_codebook() {
    let (mut bank, cb, cfg, series) = setup();
    bank.swap(0, 1);
    assert!(matches!(
        detect_stream(&series, &bank, &cb, &cfg),
        Err(Error::Incompatible(_))
    ));
    bank.pop();
    assert!(detect_stream(&series, &bank, &cb, &cfg).is_err());
}

#[test]
fn csv_roundtrip() {
    let (bank, cb, cfg, series) = setup();
    let d = detect_stream(&series, &bank, &cb, &cfg).unwrap();
    let text = decisions_to_csv(&d);
    assert!(text.starts_with(DECISIONS_HEADER));
    let back = parse_decisions_csv(&text).unwrap();
    assert_eq!(back.len(), d.len());
    for (a, b) in d.iter().zip(&back) {
        assert_eq!(
            (a.start_sample, a.raw_label, a.corrected_label),
            (b.start_sample, b.raw_label, b.corrected_label)
        );
        assert!((a.similarity - b.similarity).abs() <= 5e-7);
    }
    assert!(parse_decisions_csv("nope\n").is_err());
}

#[test]
fn invalid_config() {
    let (bank, cb, cfg, series) = setup();
    for bad in [
        DetectorConfig {
            threshold: 1.5,
            ..cfg
        },
        DetectorConfig { n_s: 3, ..cfg },
        DetectorConfig { hop: 0, ..cfg },
    ] {
        assert!(matches!(
            detect_stream(&series, &bank, &cb, &bad),
            Err(Error::Config(_))
        ));
    }
}
