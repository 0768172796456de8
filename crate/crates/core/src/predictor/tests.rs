use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::quantizer::{LevelTensor, PairId};

const P0: PairId = PairId { channel: 0, scale: 0 };

fn shape(li: usize, lo: usize, v: usize, h: usize) -> EdShape {
    EdShape {
        input_len: li,
        output_len: lo,
        levels: v,
        hidden_size: h,
    }
}

fn random_model(s: EdShape, seed: u64) -> EdModel {
    EdModel::random(P0, s, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn one_hot_rows(levels: &[usize], v: usize) -> Vec<Vec<f64>> {
    levels
        .iter()
        .map(|&l| crate::quantizer::one_hot(l, v).unwrap())
        .collect()
}

fn random_set(n: usize, s: EdShape, seed: u64) -> SequenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n * s.input_len)
        .map(|_| rng.random_range(0..s.levels))
        .collect();
    let targets = (0..n * s.output_len)
        .map(|_| rng.random_range(0..s.levels))
        .collect();
    SequenceSet::new(s.input_len, s.output_len, s.levels, inputs, targets).unwrap()
}

#[test]
fn single_step_softmax_sums_to_one() {
    let m = random_model(shape(5, 1, 6, 4), 1);
    let (probs, levels) = m.predict_sequence(&one_hot_rows(&[0, 1, 2, 3, 4], 6)).unwrap();
    assert_eq!(probs.len(), 1);
    assert_eq!(levels.len(), 1);
    assert!((probs[0].iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn every_decoding_step_is_normalized() {
    let m = random_model(shape(4, 9, 7, 5), 2);
    let (probs, _) = m.predict_sequence(&one_hot_rows(&[6, 0, 3, 3], 7)).unwrap();
    for row in probs {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn dominant_dense_bias_fixes_the_output() {
    let mut m = random_model(shape(3, 6, 5, 4), 3);
    m.dense_b = vec![0.0; 5];
    m.dense_b[3] = 100.0;
    let (_, levels) = m.predict_sequence(&one_hot_rows(&[0, 4, 1], 5)).unwrap();
    assert_eq!(levels, vec![3; 6]);
}

#[test]
fn rejects_non_one_hot_rows() {
    let m = random_model(shape(2, 2, 3, 2), 4);
    let bad = vec![vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0]];
    assert!(m.predict_sequence(&bad).is_err());
    let short = vec![vec![1.0, 0.0, 0.0]];
    assert!(m.predict_sequence(&short).is_err());
}

#[test]
fn argmax_ties_go_low() {
    assert_eq!(argmax(&[0.25, 0.25, 0.5, 0.5]), 2);
    assert_eq!(argmax(&[0.5, 0.5]), 0);
}

#[test]
fn loss_examples() {
    let m = EdModel::zeros(P0, shape(2, 2, 4, 3));
    let targets = one_hot_rows(&[0, 3, 1], 4);
    let (q, l1) = compute_loss(&m, &targets, &targets, 0.001, false).unwrap();
    assert!(q <= 1e-11);
    assert_eq!(l1, 0.0);
    let uniform = vec![vec![0.25; 4]; 3];
    let (q, _) = compute_loss(&m, &uniform, &targets, 0.0, false).unwrap();
    assert!((q - 4f64.ln()).abs() < 1e-12);

    let mut w = m.clone();
    w.dense_w[0] = 1.0;
    w.encoder.w_hidden[5] = -2.0;
    w.dense_b[1] = 7.0;
    let (_, l1) = compute_loss(&w, &uniform, &targets, 0.001, false).unwrap();
    assert!((l1 - 0.003).abs() < 1e-15);
    let (_, l1b) = compute_loss(&w, &uniform, &targets, 0.001, true).unwrap();
    assert!((l1b - 0.010).abs() < 1e-15);

    let skewed = vec![vec![0.5, 0.5, 0.5, 0.5]; 3];
    assert!(compute_loss(&m, &skewed, &targets, 0.0, false).is_err());
}

/// Central differences on every parameter.
fn check_gradient(m: &EdModel, data: &SequenceSet, lambda: f64, biases: bool, tf: bool) -> f64 {
    let (_, grad) = objective_and_gradient(m, data, lambda, biases, tf).unwrap();
    let base = m.flat_params();
    let mut probe = m.clone();
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + eps;
        probe.set_flat_params(&p).unwrap();
        let up = objective(&probe, data, lambda, biases, tf).unwrap();
        p[i] = base[i] - eps;
        probe.set_flat_params(&p).unwrap();
        let down = objective(&probe, data, lambda, biases, tf).unwrap();
        let numeric = (up - down) / (2.0 * eps);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

fn away_from_zero(m: &mut EdModel) {
    let p: Vec<f64> = m
        .flat_params()
        .into_iter()
        .map(|w| {
            if w.abs() < 0.05 {
                0.05f64.copysign(w) + w
            } else {
                w
            }
        })
        .collect();
    m.set_flat_params(&p).unwrap();
}

#[test]
fn gradient_matches_finite_differences_free_running() {
    let s = shape(3, 4, 5, 3);
    let mut m = random_model(s, 7);
    away_from_zero(&mut m);
    let data = random_set(3, s, 8);
    let worst = check_gradient(&m, &data, 0.01, true, false);
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn gradient_matches_finite_differences_teacher_forced() {
    let s = shape(3, 3, 8, 4);
    let mut m = random_model(s, 9);
    away_from_zero(&mut m);
    let data = random_set(2, s, 10);
    let worst = check_gradient(&m, &data, 0.001, false, true);
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn memorizes_a_single_example() {
    let s = shape(5, 5, 8, 16);
    let data = random_set(1, s, 11);
    let cfg = TrainConfig {
        epochs: 200,
        lambda: 0.0,
        hidden_size: 16,
        learning_rate: 0.01,
        batch_size: 1,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&data, P0, &cfg).unwrap();
    let q = objective(&out.model, &data, 0.0, false, true).unwrap();
    assert!(q <= 0.01, "Q = {q}");
    assert_eq!(out.model.predict_levels(data.input(0)).unwrap(), data.target(0));
}

#[test]
fn l1_shrinks_weights() {
    let s = shape(4, 4, 6, 8);
    let data = random_set(16, s, 12);
    let base = TrainConfig {
        epochs: 20,
        hidden_size: 8,
        learning_rate: 0.01,
        batch_size: 4,
        seed: 5,
        lambda: 0.0,
        ..TrainConfig::default()
    };
    let free = train(&data, P0, &base).unwrap().model.l1_norm(false);
    let tied = train(&data, P0, &TrainConfig { lambda: 1.0, ..base })
        .unwrap()
        .model
        .l1_norm(false);
    assert!(tied < free, "{tied} vs {free}");
}

fn cycle_set(phases: &[usize], li: usize, lo: usize) -> SequenceSet {
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    for &p in phases {
        inputs.extend((0..li).map(|t| (p + t) % 4));
        targets.extend((0..lo).map(|t| (p + li + t) % 4));
    }
    SequenceSet::new(li, lo, 4, inputs, targets).unwrap()
}

#[test]
fn continues_a_period_four_cycle() {
    // Windows at stream offsets 0..24 train; offsets 100..108 are held out.
    let data = cycle_set(&(0..24).collect::<Vec<_>>(), 6, 6);
    let cfg = TrainConfig {
        epochs: 60,
        lambda: 0.0,
        hidden_size: 12,
        learning_rate: 0.02,
        batch_size: 4,
        seed: 1,
        ..TrainConfig::default()
    };
    let model = train(&data, P0, &cfg).unwrap().model;
    let held = cycle_set(&(100..108).collect::<Vec<_>>(), 6, 6);
    let mut hits = 0;
    for k in 0..held.len() {
        let pred = model.predict_levels(held.input(k)).unwrap();
        hits += pred.iter().zip(held.target(k)).filter(|(a, b)| a == b).count();
    }
    assert_eq!(hits, held.len() * 6);
}

#[test]
fn decoding_depends_only_on_earlier_predictions() {
    let s = shape(4, 6, 5, 4);
    let m = random_model(s, 13);
    let input = [1, 4, 0, 2];
    let full = m.predict_levels(&input).unwrap();
    let mut ws = m.workspace();
    m.predict_levels_with(&mut ws, &input).unwrap();
    let full_probs = ws.probs().to_vec();
    for cut in 1..6 {
        let mut short = m.clone();
        short.shape.output_len = cut;
        let (probs, levels) = short.predict_sequence(&one_hot_rows(&input, 5)).unwrap();
        assert_eq!(levels[..], full[..cut]);
        assert_eq!(probs.concat()[..], full_probs[..cut * 5]);
    }
}

#[test]
fn cell_matches_dense_step_inside_the_model() {
    let s = shape(2, 1, 3, 2);
    let m = random_model(s, 14);
    let (h1, c1) = m
        .encoder
        .cell_step(&[0.0, 1.0, 0.0], &[0.0; 2], &[0.0; 2])
        .unwrap();
    let (h2, c2) = m.encoder.cell_step(&[0.0, 0.0, 1.0], &h1, &c1).unwrap();
    let (h3, _) = m.decoder.cell_step(&[0.0; 3], &h2, &c2).unwrap();
    let logits: Vec<f64> = (0..3)
        .map(|k| m.dense_b[k] + (0..2).map(|u| m.dense_w[u * 3 + k] * h3[u]).sum::<f64>())
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let (probs, _) = m.predict_sequence(&one_hot_rows(&[1, 2], 3)).unwrap();
    for k in 0..3 {
        assert!((probs[0][k] - logits[k].exp() / z).abs() < 1e-12);
    }
}

#[test]
fn weight_file_roundtrip() {
    let s = shape(3, 2, 6, 5);
    let mut m = random_model(s, 15);
    let p: Vec<f64> = m.flat_params().iter().map(|&w| w as f32 as f64).collect();
    m.set_flat_params(&p).unwrap();
    let bytes = m.to_f32_bytes();
    assert_eq!(bytes.len(), 4 * s.n_params());
    let back = EdModel::from_f32_bytes(P0, s, &bytes, std::path::Path::new("mem")).unwrap();
    assert_eq!(back, m);
    // Encoder input-gate weight for level 1, unit 0 is the second float.
    assert_eq!(
        f32::from_le_bytes(bytes[4..8].try_into().unwrap()) as f64,
        m.encoder.w_input[20]
    );
    assert!(EdModel::from_f32_bytes(P0, s, &bytes[4..], std::path::Path::new("mem")).is_err());
}

fn level_tensors(n: usize, li: usize, lo: usize, m: usize, q: usize, v: usize) -> (LevelTensor, LevelTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut make = |len: usize| {
        LevelTensor::from_levels(
            n,
            len,
            m,
            q,
            v,
            (0..n * len * m * q)
                .map(|_| rng.random_range(0..v as u16))
                .collect(),
        )
        .unwrap()
    };
    let a = make(li);
    let b = make(lo);
    (a, b)
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        hidden_size: 3,
        batch_size: 4,
        seed: 21,
        ..TrainConfig::default()
    }
}

#[test]
fn bank_order_and_determinism() {
    let (x, y) = level_tensors(6, 3, 2, 2, 3, 5);
    let serial = train_bank(&x, &y, &quick_cfg(), Some(1)).unwrap();
    let parallel = train_bank(&x, &y, &quick_cfg(), Some(3)).unwrap();
    let pairs: Vec<PairId> = serial.iter().map(|o| o.model.pair).collect();
    assert_eq!(pairs, PairId::all(2, 3));
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(a.model.to_f32_bytes(), b.model.to_f32_bytes());
    }
}

#[test]
fn bank_of_one_equals_direct_training() {
    let (x, y) = level_tensors(5, 3, 2, 1, 1, 4);
    let bank = train_bank(&x, &y, &quick_cfg(), None).unwrap();
    assert_eq!(bank.len(), 1);
    let set = SequenceSet::from_tensors(&x, &y, P0).unwrap();
    let direct = train(
        &set,
        P0,
        &TrainConfig {
            seed: pair_seed(21, 0),
            ..quick_cfg()
        },
    )
    .unwrap();
    assert_eq!(direct.model, bank[0].model);
    assert_eq!(direct.loss_curve, bank[0].loss_curve);
}

#[test]
fn empty_training_set_is_an_error() {
    let empty = SequenceSet::new(2, 2, 3, vec![], vec![]).unwrap();
    assert!(matches!(
        train(&empty, P0, &quick_cfg()),
        Err(crate::Error::InsufficientData(_))
    ));
}
