//! `ed_<channel>_<scale>.f32` weight files.
//!
//! Little-endian `f32`, no header. Tensor order:
//!
//! 1. encoder input weights `[4·n_h × v]`, row-major, gate blocks i, f, g, o
//! 2. encoder recurrent weights `[4·n_h × n_h]`, row-major, same gate blocks
//! 3. encoder bias `[4·n_h]`
//! 4. decoder tensors 1–3 in the same layout
//! 5. dense weights `[v × n_h]`, row-major
//! 6. dense bias `[v]`

use std::path::Path;

use super::lstm::LstmCell;
use super::model::{EdModel, EdShape};
use crate::error::{Error, Result};
use crate::fsio;
use crate::quantizer::PairId;

fn push_cell(out: &mut Vec<f64>, cell: &LstmCell) {
    let (v, g) = (cell.input_size, 4 * cell.hidden_size);
    for r in 0..g {
        out.extend((0..v).map(|k| cell.w_input[k * g + r]));
    }
    for r in 0..g {
        out.extend((0..cell.hidden_size).map(|j| cell.w_hidden[j * g + r]));
    }
    out.extend_from_slice(&cell.bias);
}

fn take_cell(values: &mut &[f64], v: usize, h: usize) -> LstmCell {
    let g = 4 * h;
    let mut take = |n: usize| {
        let (head, tail) = values.split_at(n);
        *values = tail;
        head.to_vec()
    };
    let w_input = transpose(&take(g * v), g, v);
    let w_hidden = transpose(&take(g * h), g, h);
    LstmCell {
        input_size: v,
        hidden_size: h,
        w_input,
        w_hidden,
        bias: take(g),
    }
}

/// Row-major `[rows × cols]` to column-major.
fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = m[r * cols + c];
        }
    }
    out
}

impl EdModel {
    /// Serializes the parameters in weight-file order.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.shape.n_params());
        push_cell(&mut out, &self.encoder);
        push_cell(&mut out, &self.decoder);
        let (v, h) = (self.shape.levels, self.shape.hidden_size);
        for k in 0..v {
            out.extend((0..h).map(|u| self.dense_w[u * v + k]));
        }
        out.extend_from_slice(&self.dense_b);
        fsio::encode_f32(out)
    }

    pub fn from_f32_bytes(pair: PairId, shape: EdShape, bytes: &[u8], origin: &Path) -> Result<Self> {
        shape.validate()?;
        let values = fsio::decode_f32(origin, bytes)?;
        if values.len() != shape.n_params() {
            return Err(Error::format(
                origin,
                format!("expected {} weights, found {}", shape.n_params(), values.len()),
            ));
        }
        let (v, h) = (shape.levels, shape.hidden_size);
        let mut rest = &values[..];
        let encoder = take_cell(&mut rest, v, h);
        let decoder = take_cell(&mut rest, v, h);
        let (dw, db) = rest.split_at(v * h);
        let model = Self {
            pair,
            shape,
            encoder,
            decoder,
            dense_w: transpose(dw, v, h),
            dense_b: db.to_vec(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, &self.to_f32_bytes())
    }

    pub fn load(pair: PairId, shape: EdShape, path: &Path) -> Result<Self> {
        Self::from_f32_bytes(pair, shape, &fsio::read_bytes(path)?, path)
    }

    /// Conventional weight-file name of this model's pair.
    pub fn file_name(pair: PairId) -> String {
        format!("ed_{pair}.f32")
    }
}
