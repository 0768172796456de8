use serde::{Deserialize, Serialize};

use super::lstm::{axpy, dot, step_backward, CellGrads, LstmCell, StepCache};
use crate::error::{Error, Result};
use crate::quantizer::PairId;

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Shape metadata of one encoder-decoder predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdShape {
    pub input_len: usize,
    pub output_len: usize,
    pub levels: usize,
    pub hidden_size: usize,
}

impl EdShape {
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.output_len == 0 {
            return Err(Error::Config("ℓ_i and ℓ_o must be >= 1".into()));
        }
        if self.levels < 2 {
            return Err(Error::Config("v must be >= 2".into()));
        }
        if self.hidden_size == 0 {
            return Err(Error::Config("n_h must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of scalar parameters.
    pub fn n_params(&self) -> usize {
        let (v, h) = (self.levels, self.hidden_size);
        2 * (4 * h * v + 4 * h * h + 4 * h) + v * h + v
    }
}

/// One univariate sequence predictor: LSTM encoder, LSTM decoder, dense
/// softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdModel {
    pub pair: PairId,
    pub shape: EdShape,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    /// `dense_w[u * v + k]` maps hidden unit `u` to level `k`.
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

/// Forward activations and scratch buffers, reusable across sequences.
#[derive(Debug, Clone)]
pub struct Workspace {
    enc: Vec<StepCache>,
    dec: Vec<StepCache>,
    enc_inputs: Vec<usize>,
    dec_inputs: Vec<Option<usize>>,
    /// `[ℓ_o × v]`
    probs: Vec<f64>,
    levels: Vec<usize>,
    scratch: Scratch,
}

#[derive(Debug, Clone)]
struct Scratch {
    zeros: Vec<f64>,
    dh: Vec<f64>,
    dc: Vec<f64>,
    dh_prev: Vec<f64>,
    dc_prev: Vec<f64>,
    dpre: Vec<f64>,
    dz: Vec<f64>,
}

impl Workspace {
    pub fn new(shape: EdShape) -> Self {
        let h = shape.hidden_size;
        Self {
            enc: (0..shape.input_len).map(|_| StepCache::new(h)).collect(),
            dec: (0..shape.output_len).map(|_| StepCache::new(h)).collect(),
            enc_inputs: vec![0; shape.input_len],
            dec_inputs: vec![None; shape.output_len],
            probs: vec![0.0; shape.output_len * shape.levels],
            levels: vec![0; shape.output_len],
            scratch: Scratch {
                zeros: vec![0.0; h],
                dh: vec![0.0; h],
                dc: vec![0.0; h],
                dh_prev: vec![0.0; h],
                dc_prev: vec![0.0; h],
                dpre: vec![0.0; 4 * h],
                dz: vec![0.0; shape.levels],
            },
        }
    }

    /// Softmax rows of the last forward pass, `[ℓ_o × v]`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Argmax levels of the last forward pass.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }
}

/// Gradients laid out like [`EdModel`].
#[derive(Debug, Clone)]
pub(crate) struct EdGrads {
    pub encoder: CellGrads,
    pub decoder: CellGrads,
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

impl EdGrads {
    pub fn zeros_like(m: &EdModel) -> Self {
        Self {
            encoder: CellGrads::zeros_like(&m.encoder),
            decoder: CellGrads::zeros_like(&m.decoder),
            dense_w: vec![0.0; m.dense_w.len()],
            dense_b: vec![0.0; m.dense_b.len()],
        }
    }

    pub fn clear(&mut self) {
        self.encoder.clear();
        self.decoder.clear();
        self.dense_w.fill(0.0);
        self.dense_b.fill(0.0);
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.encoder.w_input,
            &mut self.encoder.w_hidden,
            &mut self.encoder.bias,
            &mut self.decoder.w_input,
            &mut self.decoder.w_hidden,
            &mut self.decoder.bias,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }
}

/// Which of the eight parameter slices are weights (as opposed to biases).
pub(crate) const IS_WEIGHT: [bool; 8] = [true, true, false, true, true, false, true, false];

/// Wider vector kernels give bit-identical results: no operation is fused
/// or reordered, only more lanes run at once.
#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    std::is_x86_feature_detected!("avx2")
}

#[inline(always)]
fn softmax_into(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    logits.iter_mut().for_each(|z| *z /= sum);
}

/// Index of the largest entry; ties go to the lowest index.
#[inline(always)]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = k;
        }
    }
    best
}

/// Decodes a one-hot row to its level.
pub(crate) fn one_hot_level(row: &[f64], index: usize) -> Result<usize> {
    let mut hot = None;
    for (k, &x) in row.iter().enumerate() {
        if x == 1.0 && hot.is_none() {
            hot = Some(k);
        } else if x != 0.0 {
            return Err(Error::NotOneHot(index));
        }
    }
    hot.ok_or(Error::NotOneHot(index))
}

impl EdModel {
    pub fn zeros(pair: PairId, shape: EdShape) -> Self {
        let (v, h) = (shape.levels, shape.hidden_size);
        Self {
            pair,
            shape,
            encoder: LstmCell::zeros(v, h),
            decoder: LstmCell::zeros(v, h),
            dense_w: vec![0.0; v * h],
            dense_b: vec![0.0; v],
        }
    }

    /// Uniform `±1/√n_h` initialization.
    pub fn random(pair: PairId, shape: EdShape, rng: &mut impl rand::Rng) -> Self {
        let (v, h) = (shape.levels, shape.hidden_size);
        let encoder = LstmCell::random(v, h, rng);
        let decoder = LstmCell::random(v, h, rng);
        let bound = 1.0 / (h as f64).sqrt();
        let dense_w = (0..v * h).map(|_| rng.random_range(-bound..bound)).collect();
        let dense_b = (0..v).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            pair,
            shape,
            encoder,
            decoder,
            dense_w,
            dense_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let (v, h) = (self.shape.levels, self.shape.hidden_size);
        for cell in [&self.encoder, &self.decoder] {
            if cell.input_size != v || cell.hidden_size != h {
                return Err(Error::Shape("LSTM size disagrees with ED shape".into()));
            }
            cell.validate()?;
        }
        if self.dense_w.len() != v * h || self.dense_b.len() != v {
            return Err(Error::Shape("dense layer must map n_h to v".into()));
        }
        if self.dense_w.iter().chain(&self.dense_b).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dense parameter".into()));
        }
        Ok(())
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.shape)
    }

    pub(crate) fn slices(&self) -> [&[f64]; 8] {
        [
            &self.encoder.w_input,
            &self.encoder.w_hidden,
            &self.encoder.bias,
            &self.decoder.w_input,
            &self.decoder.w_hidden,
            &self.decoder.bias,
            &self.dense_w,
            &self.dense_b,
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.encoder.w_input,
            &mut self.encoder.w_hidden,
            &mut self.encoder.bias,
            &mut self.decoder.w_input,
            &mut self.decoder.w_hidden,
            &mut self.decoder.bias,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    /// All parameters concatenated in internal order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.shape.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.shape.n_params(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for s in self.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// ℓ1 norm of the weight matrices, plus biases when asked.
    pub fn l1_norm(&self, include_biases: bool) -> f64 {
        self.slices()
            .iter()
            .zip(IS_WEIGHT)
            .filter(|(_, w)| *w || include_biases)
            .flat_map(|(s, _)| s.iter())
            .map(|x| x.abs())
            .sum()
    }

    /// Runs encoder and decoder on `input` levels. The decoder is fed the
    /// previous `teacher` level when given, else its own previous argmax.
    pub(crate) fn forward(&self, ws: &mut Workspace, input: &[usize], teacher: Option<&[usize]>) {
        #[cfg(target_arch = "x86_64")]
        if has_avx2() {
            // SAFETY: the CPU supports the enabled features.
            return unsafe { self.forward_avx2(ws, input, teacher) };
        }
        self.forward_impl(ws, input, teacher)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn forward_avx2(&self, ws: &mut Workspace, input: &[usize], teacher: Option<&[usize]>) {
        self.forward_impl(ws, input, teacher)
    }

    #[inline(always)]
    fn forward_impl(&self, ws: &mut Workspace, input: &[usize], teacher: Option<&[usize]>) {
        let (li, lo, v) = (self.shape.input_len, self.shape.output_len, self.shape.levels);
        let zeros = &ws.scratch.zeros;
        ws.enc_inputs.copy_from_slice(input);
        for t in 0..li {
            let (done, rest) = ws.enc.split_at_mut(t);
            let cur = &mut rest[0];
            let (hp, cp) = match done.last() {
                Some(p) => (&p.h[..], &p.c[..]),
                None => (&zeros[..], &zeros[..]),
            };
            self.encoder.preact_sparse(Some(input[t]), hp, &mut cur.gates);
            self.encoder.activate(cp, cur);
        }
        for i in 0..lo {
            let x = if i == 0 {
                None
            } else {
                Some(teacher.map_or(ws.levels[i - 1], |tf| tf[i - 1]))
            };
            ws.dec_inputs[i] = x;
            let (done, rest) = ws.dec.split_at_mut(i);
            let cur = &mut rest[0];
            let prev = done.last().unwrap_or(&ws.enc[li - 1]);
            self.decoder.preact_sparse(x, &prev.h, &mut cur.gates);
            self.decoder.activate(&prev.c, cur);
            let row = &mut ws.probs[i * v..(i + 1) * v];
            row.copy_from_slice(&self.dense_b);
            for (col, &hu) in self.dense_w.chunks_exact(v).zip(&cur.h) {
                axpy(row, hu, col);
            }
            softmax_into(row);
            ws.levels[i] = argmax(row);
        }
    }

    /// Cross-entropy sum of the last forward pass against `target`.
    pub(crate) fn ce_sum(&self, ws: &Workspace, target: &[usize]) -> f64 {
        let v = self.shape.levels;
        target
            .iter()
            .enumerate()
            .map(|(i, &y)| -ws.probs[i * v + y].max(PROB_FLOOR).ln())
            .sum()
    }

    /// Backpropagates `scale · Σ CE` of the last forward pass into `grads`.
    pub(crate) fn backward(&self, ws: &mut Workspace, target: &[usize], scale: f64, grads: &mut EdGrads) {
        #[cfg(target_arch = "x86_64")]
        if has_avx2() {
            // SAFETY: the CPU supports the enabled features.
            return unsafe { self.backward_avx2(ws, target, scale, grads) };
        }
        self.backward_impl(ws, target, scale, grads)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn backward_avx2(&self, ws: &mut Workspace, target: &[usize], scale: f64, grads: &mut EdGrads) {
        self.backward_impl(ws, target, scale, grads)
    }

    #[inline(always)]
    fn backward_impl(&self, ws: &mut Workspace, target: &[usize], scale: f64, grads: &mut EdGrads) {
        let (li, lo, v, h) = (
            self.shape.input_len,
            self.shape.output_len,
            self.shape.levels,
            self.shape.hidden_size,
        );
        let Workspace {
            enc,
            dec,
            enc_inputs,
            dec_inputs,
            probs,
            scratch: s,
            ..
        } = ws;
        s.dh.fill(0.0);
        s.dc.fill(0.0);
        for i in (0..lo).rev() {
            let p = &probs[i * v..(i + 1) * v];
            let y = target[i];
            if p[y] >= PROB_FLOOR {
                s.dz.iter_mut().zip(p).for_each(|(d, pk)| *d = pk * scale);
                s.dz[y] -= scale;
            } else {
                s.dz.fill(0.0);
            }
            axpy(&mut grads.dense_b, 1.0, &s.dz);
            for u in 0..h {
                axpy(&mut grads.dense_w[u * v..(u + 1) * v], dec[i].h[u], &s.dz);
                s.dh[u] += dot(&self.dense_w[u * v..(u + 1) * v], &s.dz);
            }
            let prev = if i == 0 { &enc[li - 1] } else { &dec[i - 1] };
            step_backward(
                &self.decoder,
                &mut grads.decoder,
                dec_inputs[i],
                &dec[i],
                &prev.h,
                &prev.c,
                &s.dh,
                &s.dc,
                &mut s.dpre,
                &mut s.dh_prev,
                &mut s.dc_prev,
            );
            std::mem::swap(&mut s.dh, &mut s.dh_prev);
            std::mem::swap(&mut s.dc, &mut s.dc_prev);
        }
        for t in (0..li).rev() {
            let (hp, cp) = if t == 0 {
                (&s.zeros[..], &s.zeros[..])
            } else {
                (&enc[t - 1].h[..], &enc[t - 1].c[..])
            };
            step_backward(
                &self.encoder,
                &mut grads.encoder,
                Some(enc_inputs[t]),
                &enc[t],
                hp,
                cp,
                &s.dh,
                &s.dc,
                &mut s.dpre,
                &mut s.dh_prev,
                &mut s.dc_prev,
            );
            std::mem::swap(&mut s.dh, &mut s.dh_prev);
            std::mem::swap(&mut s.dc, &mut s.dc_prev);
        }
    }

    /// Runs the model on one input sequence of levels and returns the
    /// predicted levels.
    pub fn predict_levels(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut ws = self.workspace();
        self.predict_levels_with(&mut ws, input)?;
        Ok(ws.levels.clone())
    }

    /// Like [`EdModel::predict_levels`] but reuses `ws`; the result is left
    /// in `ws.levels()`.
    pub fn predict_levels_with(&self, ws: &mut Workspace, input: &[usize]) -> Result<()> {
        self.check_levels(input, self.shape.input_len)?;
        self.forward(ws, input, None);
        Ok(())
    }

    /// Autoregressive prediction from a one-hot `[ℓ_i × v]` input.
    /// Returns softmax rows `[ℓ_o × v]` and their argmax levels.
    pub fn predict_sequence(&self, input: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        if input.len() != self.shape.input_len {
            return Err(Error::Shape(format!(
                "expected {} input rows, got {}",
                self.shape.input_len,
                input.len()
            )));
        }
        let levels = input
            .iter()
            .enumerate()
            .map(|(t, row)| {
                if row.len() != self.shape.levels {
                    return Err(Error::Shape(format!(
                        "input row {t} has length {}, expected {}",
                        row.len(),
                        self.shape.levels
                    )));
                }
                one_hot_level(row, t)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ws = self.workspace();
        self.forward(&mut ws, &levels, None);
        let probs = ws.probs.chunks(self.shape.levels).map(<[f64]>::to_vec).collect();
        Ok((probs, ws.levels))
    }

    pub(crate) fn check_levels(&self, seq: &[usize], len: usize) -> Result<()> {
        if seq.len() != len {
            return Err(Error::Shape(format!(
                "expected a sequence of {len}, got {}",
                seq.len()
            )));
        }
        if let Some(&level) = seq.iter().find(|&&l| l >= self.shape.levels) {
            return Err(Error::LevelOutOfRange {
                level,
                levels: self.shape.levels,
            });
        }
        Ok(())
    }
}
