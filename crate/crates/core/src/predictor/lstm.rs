use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y += a·x`.
#[inline(always)]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Dot product with four independent accumulators, which vectorizes.
#[inline(always)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline(always)]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A single LSTM cell.
///
/// Gate blocks are stacked in the order input `i`, forget `f`, candidate `g`,
/// output `o`, each `hidden` rows tall. Both weight matrices are stored
/// column-major: `w_input[k * 4h + r]` and `w_hidden[j * 4h + r]`. A one-hot
/// input then selects one contiguous column and the recurrent product is a
/// run of vector updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_input: Vec<f64>,
    pub w_hidden: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-step activations kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct StepCache {
    /// Post-activation gates `[i | f | g | o]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl StepCache {
    pub fn new(h: usize) -> Self {
        Self {
            gates: vec![0.0; 4 * h],
            c: vec![0.0; h],
            tanh_c: vec![0.0; h],
            h: vec![0.0; h],
        }
    }
}

impl LstmCell {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let g = 4 * hidden_size;
        Self {
            input_size,
            hidden_size,
            w_input: vec![0.0; input_size * g],
            w_hidden: vec![0.0; g * hidden_size],
            bias: vec![0.0; g],
        }
    }

    /// Uniform `±1/√hidden` initialization of every parameter.
    pub fn random(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let mut cell = Self::zeros(input_size, hidden_size);
        for p in cell
            .w_input
            .iter_mut()
            .chain(cell.w_hidden.iter_mut())
            .chain(cell.bias.iter_mut())
        {
            *p = rng.random_range(-bound..bound);
        }
        cell
    }

    pub fn validate(&self) -> Result<()> {
        let g = 4 * self.hidden_size;
        if self.w_input.len() != self.input_size * g
            || self.w_hidden.len() != g * self.hidden_size
            || self.bias.len() != g
        {
            return Err(Error::Shape("LSTM parameter shapes disagree".into()));
        }
        if self
            .w_input
            .iter()
            .chain(&self.w_hidden)
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("LSTM parameter".into()));
        }
        Ok(())
    }

    /// Gate pre-activations for a dense input vector.
    fn preact_dense(&self, x: &[f64], h_prev: &[f64], out: &mut [f64]) {
        let g = 4 * self.hidden_size;
        out.copy_from_slice(&self.bias);
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                let col = &self.w_input[k * g..(k + 1) * g];
                out.iter_mut().zip(col).for_each(|(o, w)| *o += xk * w);
            }
        }
        self.add_recurrent(h_prev, out);
    }

    /// Gate pre-activations for a one-hot input (`Some(level)`) or the zero
    /// vector (`None`).
    #[inline(always)]
    pub(crate) fn preact_sparse(&self, x: Option<usize>, h_prev: &[f64], out: &mut [f64]) {
        let g = 4 * self.hidden_size;
        match x {
            Some(k) => {
                let col = &self.w_input[k * g..(k + 1) * g];
                out.iter_mut()
                    .zip(&self.bias)
                    .zip(col)
                    .for_each(|((o, b), w)| *o = b + w);
            }
            None => out.copy_from_slice(&self.bias),
        }
        self.add_recurrent(h_prev, out);
    }

    #[inline(always)]
    fn add_recurrent(&self, h_prev: &[f64], out: &mut [f64]) {
        for (col, &hj) in self.w_hidden.chunks_exact(out.len()).zip(h_prev) {
            axpy(out, hj, col);
        }
    }

    /// Applies gate nonlinearities to `cache.gates` (holding pre-activations)
    /// and updates the cell and hidden state.
    #[inline(always)]
    pub(crate) fn activate(&self, c_prev: &[f64], cache: &mut StepCache) {
        let h = self.hidden_size;
        let (ifg, o) = cache.gates.split_at_mut(3 * h);
        let (i_f, g) = ifg.split_at_mut(2 * h);
        let (i, f) = i_f.split_at_mut(h);
        for u in 0..h {
            i[u] = sigmoid(i[u]);
            f[u] = sigmoid(f[u]);
            g[u] = g[u].tanh();
            o[u] = sigmoid(o[u]);
            let c = f[u] * c_prev[u] + i[u] * g[u];
            let tc = c.tanh();
            cache.c[u] = c;
            cache.tanh_c[u] = tc;
            cache.h[u] = o[u] * tc;
        }
    }

    /// One forward step with a dense input vector.
    pub fn cell_step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.input_size || h_prev.len() != self.hidden_size || c_prev.len() != self.hidden_size
        {
            return Err(Error::Shape(format!(
                "cell_step expects x[{}], h[{}], c[{}]; got x[{}], h[{}], c[{}]",
                self.input_size,
                self.hidden_size,
                self.hidden_size,
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        let mut cache = StepCache::new(self.hidden_size);
        self.preact_dense(x, h_prev, &mut cache.gates);
        self.activate(c_prev, &mut cache);
        Ok((cache.h, cache.c))
    }
}

/// Gradient buffers matching an [`LstmCell`].
#[derive(Debug, Clone)]
pub(crate) struct CellGrads {
    pub w_input: Vec<f64>,
    pub w_hidden: Vec<f64>,
    pub bias: Vec<f64>,
}

impl CellGrads {
    pub fn zeros_like(cell: &LstmCell) -> Self {
        Self {
            w_input: vec![0.0; cell.w_input.len()],
            w_hidden: vec![0.0; cell.w_hidden.len()],
            bias: vec![0.0; cell.bias.len()],
        }
    }

    pub fn clear(&mut self) {
        self.w_input.fill(0.0);
        self.w_hidden.fill(0.0);
        self.bias.fill(0.0);
    }
}

/// Backward through one step.
///
/// `dh` is the loss gradient w.r.t. this step's `h` and `dc` w.r.t. its `c`
/// (from the following step). On return `dh_prev`/`dc_prev` hold the
/// gradients w.r.t. the previous state; `dpre` is scratch of length `4h`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub(crate) fn step_backward(
    cell: &LstmCell,
    grads: &mut CellGrads,
    x: Option<usize>,
    cache: &StepCache,
    h_prev: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc: &[f64],
    dpre: &mut [f64],
    dh_prev: &mut [f64],
    dc_prev: &mut [f64],
) {
    let h = cell.hidden_size;
    let g4 = 4 * h;
    let gates = &cache.gates;
    for u in 0..h {
        let (i, f, g, o) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
        let tc = cache.tanh_c[u];
        let dcu = dc[u] + dh[u] * o * (1.0 - tc * tc);
        dpre[u] = dcu * g * i * (1.0 - i);
        dpre[h + u] = dcu * c_prev[u] * f * (1.0 - f);
        dpre[2 * h + u] = dcu * i * (1.0 - g * g);
        dpre[3 * h + u] = dh[u] * tc * o * (1.0 - o);
        dc_prev[u] = dcu * f;
    }
    grads.bias.iter_mut().zip(dpre.iter()).for_each(|(b, d)| *b += d);
    if let Some(k) = x {
        grads.w_input[k * g4..(k + 1) * g4]
            .iter_mut()
            .zip(dpre.iter())
            .for_each(|(w, d)| *w += d);
    }
    for (j, (&hp, dhp)) in h_prev.iter().zip(dh_prev.iter_mut()).enumerate() {
        axpy(&mut grads.w_hidden[j * g4..(j + 1) * g4], hp, dpre);
        *dhp = dot(&cell.w_hidden[j * g4..(j + 1) * g4], dpre);
    }
}
