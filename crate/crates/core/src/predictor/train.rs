use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{one_hot_level, EdGrads, EdModel, EdShape, Workspace, IS_WEIGHT, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::quantizer::{LevelTensor, PairId};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// ℓ1 coefficient λ.
    pub lambda: f64,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub teacher_forcing: bool,
    pub seed: u64,
    /// Also penalize biases in the ℓ1 term.
    pub include_biases: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lambda: 0.001,
            hidden_size: 90,
            learning_rate: 1e-3,
            batch_size: 32,
            teacher_forcing: true,
            seed: 0,
            include_biases: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("train.lambda must be >= 0".into()));
        }
        if self.hidden_size == 0 {
            return Err(Error::Config("train.hidden_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Level sequences of one stream: `N` inputs of `ℓ_i` and targets of `ℓ_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    input_len: usize,
    output_len: usize,
    levels: usize,
    inputs: Vec<usize>,
    targets: Vec<usize>,
}

impl SequenceSet {
    pub fn new(
        input_len: usize,
        output_len: usize,
        levels: usize,
        inputs: Vec<usize>,
        targets: Vec<usize>,
    ) -> Result<Self> {
        if input_len == 0 || output_len == 0 {
            return Err(Error::Config("ℓ_i and ℓ_o must be >= 1".into()));
        }
        if !inputs.len().is_multiple_of(input_len)
            || !targets.len().is_multiple_of(output_len)
            || inputs.len() / input_len != targets.len() / output_len
        {
            return Err(Error::Shape("inputs and targets disagree in count".into()));
        }
        if let Some(&level) = inputs.iter().chain(&targets).find(|&&l| l >= levels) {
            return Err(Error::LevelOutOfRange { level, levels });
        }
        Ok(Self {
            input_len,
            output_len,
            levels,
            inputs,
            targets,
        })
    }

    /// Builds a set from one-hot rows: `inputs[k][t]` has length `v`.
    pub fn from_one_hot(inputs: &[Vec<Vec<f64>>], targets: &[Vec<Vec<f64>>], levels: usize) -> Result<Self> {
        let li = inputs.first().map_or(0, Vec::len);
        let lo = targets.first().map_or(0, Vec::len);
        if inputs.len() != targets.len() {
            return Err(Error::Shape("inputs and targets disagree in count".into()));
        }
        let decode = |seqs: &[Vec<Vec<f64>>], len: usize| -> Result<Vec<usize>> {
            let mut out = Vec::with_capacity(seqs.len() * len);
            for (k, seq) in seqs.iter().enumerate() {
                if seq.len() != len {
                    return Err(Error::Shape(format!("sequence {k} has length {}", seq.len())));
                }
                for (t, row) in seq.iter().enumerate() {
                    if row.len() != levels {
                        return Err(Error::Shape(format!(
                            "row {t} of sequence {k} has length {}",
                            row.len()
                        )));
                    }
                    out.push(one_hot_level(row, k * len + t)?);
                }
            }
            Ok(out)
        };
        Self::new(li, lo, levels, decode(inputs, li)?, decode(targets, lo)?)
    }

    /// Extracts one stream's sequences from quantized window stacks.
    pub fn from_tensors(inputs: &LevelTensor, targets: &LevelTensor, pair: PairId) -> Result<Self> {
        if inputs.n_windows() != targets.n_windows()
            || (inputs.channels(), inputs.scales()) != (targets.channels(), targets.scales())
            || inputs.levels() != targets.levels()
        {
            return Err(Error::Shape("input and target tensors disagree".into()));
        }
        if pair.channel >= inputs.channels() || pair.scale >= inputs.scales() {
            return Err(Error::Shape(format!("pair {pair} outside the tensor")));
        }
        let flat = |t: &LevelTensor| -> Vec<usize> {
            (0..t.n_windows())
                .flat_map(|k| (0..t.window_len()).map(move |s| (k, s)))
                .map(|(k, s)| t.get(k, s, pair))
                .collect()
        };
        Self::new(
            inputs.window_len(),
            targets.window_len(),
            inputs.levels(),
            flat(inputs),
            flat(targets),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_len
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn input(&self, k: usize) -> &[usize] {
        &self.inputs[k * self.input_len..(k + 1) * self.input_len]
    }

    pub fn target(&self, k: usize) -> &[usize] {
        &self.targets[k * self.output_len..(k + 1) * self.output_len]
    }

    /// The sequences at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            input_len: self.input_len,
            output_len: self.output_len,
            levels: self.levels,
            inputs: indices
                .iter()
                .flat_map(|&k| self.input(k).iter().copied())
                .collect(),
            targets: indices
                .iter()
                .flat_map(|&k| self.target(k).iter().copied())
                .collect(),
        }
    }
}

/// Cross-entropy `Q` over softmax rows and ℓ1 term `Q_ℓ1` of `model`.
///
/// `probs` and `targets` hold `N·ℓ_o` rows of length `v`; targets are one-hot.
pub fn compute_loss(
    model: &EdModel,
    probs: &[Vec<f64>],
    targets: &[Vec<f64>],
    lambda: f64,
    include_biases: bool,
) -> Result<(f64, f64)> {
    if probs.len() != targets.len() || probs.is_empty() {
        return Err(Error::Shape(format!(
            "{} probability rows vs {} target rows",
            probs.len(),
            targets.len()
        )));
    }
    let mut q = 0.0;
    for (r, (p, y)) in probs.iter().zip(targets).enumerate() {
        if p.len() != y.len() {
            return Err(Error::Shape(format!("row {r} lengths differ")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(Error::NotNormalized { row: r, sum });
        }
        let k = one_hot_level(y, r)?;
        q -= p[k].max(PROB_FLOOR).ln();
    }
    q /= probs.len() as f64;
    Ok((q, lambda * model.l1_norm(include_biases)))
}

/// Objective `Q + Q_ℓ1` over `data` and its gradient, flattened in
/// [`EdModel::flat_params`] order.
pub fn objective_and_gradient(
    model: &EdModel,
    data: &SequenceSet,
    lambda: f64,
    include_biases: bool,
    teacher_forcing: bool,
) -> Result<(f64, Vec<f64>)> {
    check_compatible(model, data)?;
    let mut ws = model.workspace();
    let mut grads = EdGrads::zeros_like(model);
    let all: Vec<usize> = (0..data.len()).collect();
    let obj = batch_gradient(
        model,
        data,
        &all,
        lambda,
        include_biases,
        teacher_forcing,
        &mut ws,
        &mut grads,
    );
    Ok((
        obj,
        grads
            .slices_mut()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect(),
    ))
}

/// Objective `Q + Q_ℓ1` over `data` without a gradient.
pub fn objective(
    model: &EdModel,
    data: &SequenceSet,
    lambda: f64,
    include_biases: bool,
    teacher_forcing: bool,
) -> Result<f64> {
    check_compatible(model, data)?;
    let mut ws = model.workspace();
    let mut ce = 0.0;
    for k in 0..data.len() {
        let target = data.target(k);
        model.forward(&mut ws, data.input(k), teacher_forcing.then_some(target));
        ce += model.ce_sum(&ws, target);
    }
    Ok(ce / (data.len() * data.output_len()) as f64 + lambda * model.l1_norm(include_biases))
}

fn check_compatible(model: &EdModel, data: &SequenceSet) -> Result<()> {
    let s = model.shape;
    if (s.input_len, s.output_len, s.levels) != (data.input_len, data.output_len, data.levels) {
        return Err(Error::Shape(format!(
            "model expects ℓ_i={} ℓ_o={} v={}, data has ℓ_i={} ℓ_o={} v={}",
            s.input_len, s.output_len, s.levels, data.input_len, data.output_len, data.levels
        )));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    Ok(())
}

/// Accumulates the batch gradient into `grads` (cleared first) and returns
/// the batch objective.
#[allow(clippy::too_many_arguments)]
fn batch_gradient(
    model: &EdModel,
    data: &SequenceSet,
    batch: &[usize],
    lambda: f64,
    include_biases: bool,
    teacher_forcing: bool,
    ws: &mut Workspace,
    grads: &mut EdGrads,
) -> f64 {
    grads.clear();
    let scale = 1.0 / (batch.len() * data.output_len) as f64;
    let mut ce = 0.0;
    for &k in batch {
        let target = data.target(k);
        model.forward(ws, data.input(k), teacher_forcing.then_some(target));
        ce += model.ce_sum(ws, target);
        model.backward(ws, target, scale, grads);
    }
    if lambda > 0.0 {
        for ((g, p), is_w) in grads.slices_mut().into_iter().zip(model.slices()).zip(IS_WEIGHT) {
            if is_w || include_biases {
                g.iter_mut().zip(p).for_each(|(g, w)| {
                    if *w != 0.0 {
                        *g += lambda * w.signum();
                    }
                });
            }
        }
    }
    ce * scale + lambda * model.l1_norm(include_biases)
}

/// A trained predictor and its per-epoch mean objective.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EdModel,
    pub loss_curve: Vec<f64>,
}

/// Trains one predictor with Adam on minibatches.
///
/// Initialization and the per-epoch shuffle draw from a ChaCha8 stream seeded
/// with `cfg.seed`. Final weights are rounded to `f32`, the storage precision.
pub fn train(data: &SequenceSet, pair: PairId, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let shape = EdShape {
        input_len: data.input_len,
        output_len: data.output_len,
        levels: data.levels,
        hidden_size: cfg.hidden_size,
    };
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = EdModel::random(pair, shape, &mut rng);
    let mut ws = model.workspace();
    let mut grads = EdGrads::zeros_like(&model);
    let n_params = shape.n_params();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let obj = batch_gradient(
                &model,
                data,
                batch,
                cfg.lambda,
                cfg.include_biases,
                cfg.teacher_forcing,
                &mut ws,
                &mut grads,
            );
            if !obj.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += obj * batch.len() as f64;
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            let mut i = 0;
            for (p, g) in model.slices_mut().into_iter().zip(grads.slices_mut()) {
                for (w, &gw) in p.iter_mut().zip(g.iter()) {
                    m1[i] = ADAM_BETA1 * m1[i] + (1.0 - ADAM_BETA1) * gw;
                    m2[i] = ADAM_BETA2 * m2[i] + (1.0 - ADAM_BETA2) * gw * gw;
                    *w -= cfg.learning_rate * (m1[i] / c1) / ((m2[i] / c2).sqrt() + ADAM_EPS);
                    i += 1;
                }
            }
        }
        curve.push(total / data.len() as f64);
    }
    for s in model.slices_mut() {
        s.iter_mut().for_each(|w| *w = *w as f32 as f64);
    }
    model.validate()?;
    Ok(TrainOutcome {
        model,
        loss_curve: curve,
    })
}

/// Training seed of the pair at row-major position `index`.
pub fn pair_seed(seed: u64, index: usize) -> u64 {
    // SplitMix64 finalizer over the combined key.
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one predictor per channel-scale pair, in row-major pair order.
///
/// `workers` bounds the thread count (`None` uses rayon's default). Results
/// do not depend on it.
pub fn train_bank(
    inputs: &LevelTensor,
    targets: &LevelTensor,
    cfg: &TrainConfig,
    workers: Option<usize>,
) -> Result<Vec<TrainOutcome>> {
    cfg.validate()?;
    let pairs = PairId::all(inputs.channels(), inputs.scales());
    let sets = pairs
        .iter()
        .map(|&p| SequenceSet::from_tensors(inputs, targets, p))
        .collect::<Result<Vec<_>>>()?;
    let run = || {
        pairs
            .par_iter()
            .zip(sets.par_iter())
            .enumerate()
            .map(|(i, (&pair, set))| {
                let pair_cfg = TrainConfig {
                    seed: pair_seed(cfg.seed, i),
                    ..cfg.clone()
                };
                train(set, pair, &pair_cfg)
            })
            .collect::<Result<Vec<_>>>()
    };
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(run),
        None => run(),
    }
}
