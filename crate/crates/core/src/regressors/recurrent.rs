//! Stacked GRU and LSTM layers on a time-major (T·B)×C layout.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Var};
use super::init_uniform;
use crate::util::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Gru,
    Lstm,
}

impl Cell {
    fn gates(self) -> usize {
        match self {
            Cell::Gru => 3,
            Cell::Lstm => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    pub cell: Cell,
    pub hidden_size: usize,
    pub num_layers: usize,
    /// Applied between stacked layers during training.
    pub dropout: f64,
    pub layer_norm: bool,
}

impl RnnParams {
    pub fn init(&self, input_dim: usize, rng: &mut Rng) -> Vec<Array2<f64>> {
        let h = self.hidden_size;
        let g = self.cell.gates() * h;
        let mut out = Vec::new();
        let mut in_dim = input_dim;
        for _ in 0..self.num_layers {
            out.push(init_uniform(in_dim, g, h, rng));
            out.push(init_uniform(h, g, h, rng));
            out.push(init_uniform(1, g, h, rng));
            if self.cell == Cell::Gru {
                out.push(init_uniform(1, g, h, rng));
            }
            if self.layer_norm {
                out.push(Array2::ones((1, h)));
                out.push(Array2::zeros((1, h)));
            }
            in_dim = h;
        }
        out.push(init_uniform(h, 1, h, rng));
        out.push(init_uniform(1, 1, h, rng));
        out
    }

    /// `x` is (steps·batch)×C with row `t·batch + b`; returns (steps·batch)×1.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        steps: usize,
        batch: usize,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Var {
        let h = self.hidden_size;
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("parameter list matches architecture");
        let mut input = x;
        for layer in 0..self.num_layers {
            let wx = next();
            let wh = next();
            let bx = next();
            let bh = if self.cell == Cell::Gru { Some(next()) } else { None };
            let proj = tape.matmul(input, wx);
            let proj = tape.add_row(proj, bx);
            let mut state = tape.leaf(Array2::zeros((batch, h)));
            let mut cell = tape.leaf(Array2::zeros((batch, h)));
            let mut outs = Vec::with_capacity(steps);
            for t in 0..steps {
                let xt = tape.rows(proj, t * batch, batch);
                let hh = tape.matmul(state, wh);
                match self.cell {
                    Cell::Gru => {
                        let gh = tape.add_row(hh, bh.expect("gru hidden bias"));
                        let xr = tape.cols(xt, 0, h);
                        let hr = tape.cols(gh, 0, h);
                        let r = tape.add(xr, hr);
                        let r = tape.sigmoid(r);
                        let xz = tape.cols(xt, h, h);
                        let hz = tape.cols(gh, h, h);
                        let z = tape.add(xz, hz);
                        let z = tape.sigmoid(z);
                        let xn = tape.cols(xt, 2 * h, h);
                        let hn = tape.cols(gh, 2 * h, h);
                        let rn = tape.mul(r, hn);
                        let n = tape.add(xn, rn);
                        let n = tape.tanh(n);
                        let diff = tape.sub(state, n);
                        let keep = tape.mul(z, diff);
                        state = tape.add(n, keep);
                    }
                    Cell::Lstm => {
                        let g = tape.add(xt, hh);
                        let i = tape.cols(g, 0, h);
                        let i = tape.sigmoid(i);
                        let f = tape.cols(g, h, h);
                        let f = tape.sigmoid(f);
                        let c_in = tape.cols(g, 2 * h, h);
                        let c_in = tape.tanh(c_in);
                        let o = tape.cols(g, 3 * h, h);
                        let o = tape.sigmoid(o);
                        let kept = tape.mul(f, cell);
                        let added = tape.mul(i, c_in);
                        cell = tape.add(kept, added);
                        let squashed = tape.tanh(cell);
                        state = tape.mul(o, squashed);
                    }
                }
                outs.push(state);
            }
            let mut out = tape.vstack(outs);
            if self.layer_norm {
                let gain = next();
                let bias = next();
                out = tape.layer_norm(out, gain, bias);
            }
            if layer + 1 < self.num_layers && self.dropout > 0.0 {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    let mask = dropout_mask(tape.value(out).raw_dim(), self.dropout, rng);
                    out = tape.mul_const(out, mask);
                }
            }
            input = out;
        }
        let wo = next();
        let bo = next();
        let y = tape.matmul(input, wo);
        tape.add_row(y, bo)
    }
}

pub(crate) fn dropout_mask(dim: ndarray::Ix2, p: f64, rng: &mut Rng) -> Array2<f64> {
    let keep = 1.0 - p;
    Array2::from_shape_simple_fn(dim, || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
}
